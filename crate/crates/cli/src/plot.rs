//! Standalone SVG line charts from the run tables.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use crate::error::{CliError, CliResult};
use crate::experiment::mean_std;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum PlotKind {
    /// Seed-averaged train (bold) and test (thin) accuracy per epoch; reads
    /// `epochs.csv`.
    LearningCurve,
    /// Mean final-layer cosine against depth; reads `runs.csv`.
    SmoothnessVsDepth,
    /// Mean ± std test accuracy against depth; reads `runs.csv`.
    AccuracyVsDepth,
}

const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub stroke_width: f64,
    pub points: Vec<(f64, f64)>,
    /// Symmetric error bar half-widths, one per point.
    pub errors: Option<Vec<f64>>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Explicit x tick positions; evenly spaced when `None`.
    pub x_ticks: Option<Vec<f64>>,
}

const W: f64 = 760.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn tick_label(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(chart: &Chart) -> String {
    let pts = chart.series.iter().flat_map(|s| {
        s.points.iter().enumerate().flat_map(move |(i, &(x, y))| {
            let e = s.errors.as_ref().map_or(0.0, |e| if e[i].is_finite() { e[i] } else { 0.0 });
            [(x, y - e), (x, y + e)]
        })
    });
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, 1.0f64);
    for (x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#, LEFT + pw / 2.0, escape(&chart.title));
    // Axes.
    let _ = writeln!(
        s,
        r#"<path d="M{:.2},{:.2} L{:.2},{:.2} L{:.2},{:.2}" fill="none" stroke="black" stroke-width="1"/>"#,
        LEFT,
        TOP,
        LEFT,
        TOP + ph,
        LEFT + pw,
        TOP + ph
    );
    let x_ticks = chart
        .x_ticks
        .clone()
        .unwrap_or_else(|| (0..=5).map(|i| x0 + (x1 - x0) * i as f64 / 5.0).collect());
    for x in x_ticks {
        let px = sx(x);
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 19.0, tick_label(x));
    }
    for i in 0..=5 {
        let y = y0 + (y1 - y0) * i as f64 / 5.0;
        let py = sy(y);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT:.2}" y2="{py:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, py + 4.0, tick_label(y));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 14.0, escape(&chart.x_label));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&chart.y_label)
    );
    for (i, series) in chart.series.iter().enumerate() {
        let points: Vec<String> = series.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="{}" points="{}"/>"#,
            series.color,
            series.stroke_width,
            points.join(" ")
        );
        if let Some(errors) = &series.errors {
            for (&(x, y), &e) in series.points.iter().zip(errors) {
                if e.is_finite() && e > 0.0 {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="{3}" stroke-width="1"/>"#,
                        sx(x),
                        sy(y - e),
                        sy(y + e),
                        series.color
                    );
                }
            }
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="{}"/>"#,
            lx + 24.0,
            series.color,
            series.stroke_width
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 30.0, ly + 4.0, escape(&series.label));
    }
    s.push_str("</svg>\n");
    s
}

/// Rows of a CSV as column-name → value maps, after checking that every
/// required column is present and the body is non-empty.
fn read_table(path: &Path, required: &[&str]) -> CliResult<Vec<BTreeMap<String, String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    for col in required {
        if !header.iter().any(|h| h == col) {
            return Err(CliError::Schema(format!("{}: missing column {col:?}", path.display())));
        }
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        rows.push(header.iter().cloned().zip(rec.iter().map(str::to_string)).collect());
    }
    if rows.is_empty() {
        return Err(CliError::Schema(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

fn num(row: &BTreeMap<String, String>, col: &str) -> CliResult<f64> {
    let v = &row[col];
    v.parse::<f64>()
        .map_err(|_| CliError::Schema(format!("column {col}: not a number: {v:?}")))
}

fn config_label(row: &BTreeMap<String, String>, with_depth: bool) -> String {
    let mut label = row["layer_kind"].clone();
    if with_depth {
        label.push_str(&format!(" K={}", row["depth"]));
    }
    if row["randalign"] == "on" {
        label.push_str(" +RandAlign");
        if row["scaling"] == "off" {
            label.push_str(" (no scaling)");
        }
    } else {
        label.push_str(" base");
    }
    label
}

/// epoch -> (train sum, test sum, count)
type EpochSums = BTreeMap<u64, (f64, f64, f64)>;

fn learning_curve(path: &Path) -> CliResult<Chart> {
    let rows = read_table(path, &["layer_kind", "depth", "randalign", "scaling", "seed", "epoch", "train_acc", "test_acc"])?;
    let mut groups: BTreeMap<(u64, String), EpochSums> = BTreeMap::new();
    for row in &rows {
        let depth = num(row, "depth")? as u64;
        let epoch = num(row, "epoch")? as u64;
        let cell = groups
            .entry((depth, config_label(row, true)))
            .or_default()
            .entry(epoch)
            .or_insert((0.0, 0.0, 0.0));
        cell.0 += num(row, "train_acc")?;
        cell.1 += num(row, "test_acc")?;
        cell.2 += 1.0;
    }
    let mut series = Vec::new();
    for (i, ((_, label), epochs)) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for (train, width) in [(true, 2.5), (false, 1.0)] {
            series.push(Series {
                label: format!("{label} {}", if train { "train" } else { "test" }),
                color,
                stroke_width: width,
                points: epochs
                    .iter()
                    .map(|(&e, &(tr, te, n))| (e as f64, if train { tr / n } else { te / n }))
                    .collect(),
                errors: None,
            });
        }
    }
    Ok(Chart {
        title: "Learning curves (bold: train, thin: test)".into(),
        x_label: "epoch".into(),
        y_label: "balanced accuracy".into(),
        series,
        x_ticks: None,
    })
}

fn versus_depth(path: &Path, column: &str, with_errors: bool) -> CliResult<Chart> {
    let rows = read_table(path, &["layer_kind", "depth", "randalign", "scaling", "status", column])?;
    let mut groups: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    let mut depths = Vec::new();
    for row in &rows {
        let depth = num(row, "depth")? as u64;
        depths.push(depth as f64);
        let cell = groups.entry(config_label(row, false)).or_default().entry(depth).or_default();
        let v = num(row, column)?;
        if row["status"] != "diverged" && !v.is_nan() {
            cell.push(v);
        }
    }
    depths.sort_by(f64::total_cmp);
    depths.dedup();
    let series = groups
        .iter()
        .enumerate()
        .map(|(i, (label, by_depth))| {
            let stats: Vec<(f64, f64, f64)> = by_depth
                .iter()
                .filter(|(_, v)| !v.is_empty())
                .map(|(&d, v)| {
                    let (m, s) = mean_std(v);
                    (d as f64, m, s)
                })
                .collect();
            Series {
                label: label.clone(),
                color: PALETTE[i % PALETTE.len()],
                stroke_width: 1.5,
                points: stats.iter().map(|&(d, m, _)| (d, m)).collect(),
                errors: with_errors.then(|| stats.iter().map(|&(_, _, s)| s).collect()),
            }
        })
        .collect();
    Ok(Chart {
        title: String::new(),
        x_label: "depth K".into(),
        y_label: String::new(),
        series,
        x_ticks: Some(depths),
    })
}

pub fn build_chart(csv_path: &Path, kind: PlotKind) -> CliResult<Chart> {
    match kind {
        PlotKind::LearningCurve => learning_curve(csv_path),
        PlotKind::SmoothnessVsDepth => {
            let mut c = versus_depth(csv_path, "final_cosine", false)?;
            c.title = "Final-layer mean pairwise cosine".into();
            c.y_label = "cosine similarity".into();
            Ok(c)
        }
        PlotKind::AccuracyVsDepth => {
            let mut c = versus_depth(csv_path, "test_acc", true)?;
            c.title = "Test accuracy (mean ± std over seeds)".into();
            c.y_label = "balanced accuracy".into();
            Ok(c)
        }
    }
}

/// `plot <csv> <svg> --kind <k>`.
pub fn emit_plot(csv_path: &Path, out_svg: &Path, kind: PlotKind) -> CliResult<()> {
    let svg = render(&build_chart(csv_path, kind)?);
    if let Some(dir) = out_svg.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out_svg, svg)?;
    Ok(())
}
