use std::path::{Path, PathBuf};
use std::process::Command;

use randalign_cli::experiment::{execute, jobs, SUMMARY_HEADER};
use randalign_cli::plot::{build_chart, emit_plot, render, PlotKind};
use randalign_cli::verify::verify_with;
use randalign_cli::{CliError, ExperimentConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_randalign"))
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

const TINY: &str = "\
dataset = two_clique
two_clique_size = 3
n_train_graphs = 2
n_test_graphs = 1
layer_kind = gcn
depths = 2
randalign = off
seeds = 0
d_hidden = 4
max_epochs = 2
";

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn minimal_run_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &format!("{TINY}output_dir = {}\n", out.display()));
    let status = bin().arg("run").arg(&cfg).status().unwrap();
    assert!(status.success());
    for name in ["runs.csv", "summary.csv", "epochs.csv", "smoothness.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), SUMMARY_HEADER.join(","));
    assert_eq!(summary.lines().count(), 2);
    let runs = std::fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 2);
}

#[test]
fn matrix_counts_and_determinism() {
    let text = TINY
        .replace("depths = 2", "depths = 4, 8")
        .replace("randalign = off", "randalign = off, on")
        .replace("seeds = 0", "seeds = 0..4");
    let cfg = ExperimentConfig::parse(&text).unwrap();
    assert_eq!(jobs(&cfg).len(), 20);
    let a = execute(&cfg, 1).unwrap();
    assert_eq!(a.runs_csv.lines().count(), 21);
    assert_eq!(a.summary_csv.lines().count(), 5);
    // Canonical order: depth, then randalign off before on, then seed.
    let first: Vec<&str> = a.runs_csv.lines().nth(1).unwrap().split(',').take(5).collect();
    assert_eq!(first, ["gcn", "4", "off", "na", "0"]);
    let b = execute(&cfg, 3).unwrap();
    assert_eq!(a.runs_csv, b.runs_csv);
    assert_eq!(a.summary_csv, b.summary_csv);
    assert_eq!(a.epochs_csv, b.epochs_csv);
    assert_eq!(a.smoothness_csv, b.smoothness_csv);
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("randalign = off", "randalign = on\nscaling = on, off"));
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = bin().arg("run").arg(&cfg).arg("--out").arg(&out).status().unwrap();
        assert!(status.success());
        outputs.push((
            std::fs::read(out.join("runs.csv")).unwrap(),
            std::fs::read(out.join("summary.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "depths = four\n");
    assert_eq!(bin().arg("run").arg(&bad).status().unwrap().code(), Some(2));
    assert_eq!(bin().arg("run").arg(dir.path().join("missing.cfg")).status().unwrap().code(), Some(2));

    // Output directory blocked by a regular file.
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "x").unwrap();
    let cfg = write_config(dir.path(), TINY);
    let code = bin().arg("run").arg(&cfg).arg("--out").arg(blocker.join("sub")).status().unwrap().code();
    assert_eq!(code, Some(3));

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "layer_kind,depth,randalign,scaling,seed,epoch,lr,train_loss,train_acc,test_acc\n").unwrap();
    let svg = dir.path().join("x.svg");
    let code = bin().args(["plot"]).arg(&empty).arg(&svg).args(["--kind", "learning_curve"]).status().unwrap().code();
    assert_eq!(code, Some(2));
    let wrong = dir.path().join("wrong.csv");
    std::fs::write(&wrong, "a,b\n1,2\n").unwrap();
    let code = bin().arg("plot").arg(&wrong).arg(&svg).args(["--kind", "accuracy_vs_depth"]).status().unwrap().code();
    assert_eq!(code, Some(2));
}

#[test]
fn diverged_runs_exit_zero_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{TINY}lr = 1e308\noutput_dir = {}\n", dir.path().join("o").display()));
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
    let summary = std::fs::read_to_string(dir.path().join("o/summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().ends_with(",1"));
}

#[test]
fn learning_curve_has_bold_train_and_thin_test_lines() {
    let svg = render(&build_chart(&golden("epochs_fixture.csv"), PlotKind::LearningCurve).unwrap());
    assert_eq!(svg.matches("<polyline").count(), 4);
    assert_eq!(svg.matches(r#"stroke-width="2.5" points"#).count(), 2);
    assert_eq!(svg.matches(r#"stroke-width="1" points"#).count(), 2);
    assert!(!svg.contains("href"));
}

#[test]
fn learning_curve_matches_golden_svg() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.svg");
    emit_plot(&golden("epochs_fixture.csv"), &out, PlotKind::LearningCurve).unwrap();
    let got = std::fs::read_to_string(&out).unwrap();
    let path = golden("learning_curve.svg");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &got).unwrap();
    }
    assert_eq!(got, std::fs::read_to_string(&path).unwrap());
}

#[test]
fn depth_plots_from_runs_table() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs.csv");
    std::fs::write(
        &runs,
        "layer_kind,depth,randalign,scaling,seed,status,epochs,final_lr,train_loss,train_acc,test_acc,final_cosine,final_norm_mean,final_norm_std
gcn,4,off,na,0,epoch_cap,2,0.001,1,0.5,0.4,0.9,1,0
gcn,4,off,na,1,epoch_cap,2,0.001,1,0.5,0.5,0.95,1,0
gcn,8,off,na,0,diverged,2,0.001,nan,nan,nan,nan,nan,nan
gcn,8,off,na,1,epoch_cap,2,0.001,1,0.5,0.3,0.99,1,0
gcn,4,on,on,0,epoch_cap,2,0.001,1,0.6,0.6,0.5,1,0
gcn,8,on,on,0,epoch_cap,2,0.001,1,0.6,0.55,0.6,1,0
",
    )
    .unwrap();
    let acc = render(&build_chart(&runs, PlotKind::AccuracyVsDepth).unwrap());
    assert_eq!(acc.matches("<polyline").count(), 2);
    // One error bar: only (base, K=4) has two seeds.
    let bars = acc.lines().filter(|l| l.starts_with("<line") && l.ends_with(r#"stroke-width="1"/>"#)).count();
    assert_eq!(bars, 1);
    let smooth = build_chart(&runs, PlotKind::SmoothnessVsDepth).unwrap();
    let base = smooth.series.iter().find(|s| s.label == "gcn base").unwrap();
    assert_eq!(base.points, vec![(4.0, 0.925), (8.0, 0.99)]);
}

#[test]
fn verify_passes_and_catches_unscaled_alignment() {
    let out = bin().arg("verify").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    for name in ["two_node_smoothing", "walk_proportionality", "align_algebra", "gradient_suite"] {
        assert!(text.contains(&format!("PASS {name}")), "{name}");
    }

    fn corrupted(h: &[f64], hb: &[f64], lambda: f64, _scaling: bool) -> Vec<f64> {
        randalign_core::randalign::align_row(h, hb, lambda, false)
    }
    let mut sink = Vec::new();
    match verify_with(corrupted, &mut sink) {
        Err(CliError::VerifyFailed(names)) => assert_eq!(names, vec!["align_algebra".to_string()]),
        other => panic!("expected failure, got {other:?}"),
    }
    assert!(String::from_utf8(sink).unwrap().contains("FAIL align_algebra"));
}

#[test]
fn gen_sbm_writes_parseable_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "dataset = sbm\nsbm_block_sizes = 4,4,4\nsbm_d_in = 3\nn_train_graphs = 2\nn_test_graphs = 1\ndata_seed = 3\n",
    );
    let out = dir.path().join("fx");
    let status = bin().arg("gen-sbm").arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let data = ExperimentConfig::load(&cfg).unwrap().dataset.generate().unwrap();
    let g = &data.graphs()[2];
    let edges = std::fs::read_to_string(out.join("test_002.edges")).unwrap();
    assert_eq!(randalign_core::graph::parse_edge_list(&edges).unwrap(), g.graph);
    let labels = std::fs::read_to_string(out.join("test_002.labels")).unwrap();
    assert_eq!(randalign_core::graph::parse_labels(&labels).unwrap(), g.labels);
    assert!(out.join("train_000.features").exists());
}
