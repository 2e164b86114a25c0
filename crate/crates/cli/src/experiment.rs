//! The depth × alignment × seed run matrix and its CSV tables.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use randalign_core::fmt::sig6;
use randalign_core::graph::LabeledGraphSet;
use randalign_core::layers::{ModelConfig, Nonlinearity};
use randalign_core::training::{train_run, RunRecord};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// One cell of the matrix. `scaling` is `None` when alignment is off.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Job {
    pub depth: usize,
    pub randalign: bool,
    pub scaling: Option<bool>,
    pub seed: u64,
}

pub fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

fn scaling_label(s: Option<bool>) -> &'static str {
    s.map_or("na", on_off)
}

/// Jobs in canonical `(depth, randalign, scaling, seed)` order, duplicates
/// removed.
pub fn jobs(cfg: &ExperimentConfig) -> Vec<Job> {
    let mut out = Vec::new();
    for &depth in &cfg.depths {
        for &randalign in &cfg.randalign {
            let scalings: Vec<Option<bool>> = if randalign {
                cfg.scaling.iter().map(|&s| Some(s)).collect()
            } else {
                vec![None]
            };
            for scaling in scalings {
                for &seed in &cfg.seeds {
                    out.push(Job {
                        depth,
                        randalign,
                        scaling,
                        seed,
                    });
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

pub fn model_config(cfg: &ExperimentConfig, data: &LabeledGraphSet, job: &Job) -> ModelConfig {
    ModelConfig {
        layer_kind: cfg.layer_kind,
        depth: job.depth,
        d_in: data.d_in(),
        d_h: cfg.d_hidden,
        n_classes: data.n_classes(),
        use_randalign: job.randalign,
        align_scaling: job.scaling.unwrap_or(true),
        use_standardization: cfg.standardization,
        nonlinearity: Nonlinearity::Relu,
    }
}

/// Worker count from `RANDALIGN_THREADS`, default 1.
pub fn worker_count() -> usize {
    std::env::var("RANDALIGN_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// Runs every job, `workers` at a time; results come back in job order.
pub fn run_jobs(
    cfg: &ExperimentConfig,
    data: &LabeledGraphSet,
    jobs: &[Job],
    workers: usize,
) -> CliResult<Vec<RunRecord>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<randalign_core::Result<RunRecord>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let rec = train_run(&model_config(cfg, data, job), data, &cfg.train, job.seed);
                slots.lock().expect("result lock")[i] = Some(rec);
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every job ran").map_err(CliError::from))
        .collect()
}

fn key_fields(cfg: &ExperimentConfig, job: &Job) -> Vec<String> {
    vec![
        cfg.layer_kind.as_str().to_string(),
        job.depth.to_string(),
        on_off(job.randalign).to_string(),
        scaling_label(job.scaling).to_string(),
    ]
}

pub const RUNS_HEADER: &[&str] = &[
    "layer_kind",
    "depth",
    "randalign",
    "scaling",
    "seed",
    "status",
    "epochs",
    "final_lr",
    "train_loss",
    "train_acc",
    "test_acc",
    "final_cosine",
    "final_norm_mean",
    "final_norm_std",
];

pub const EPOCHS_HEADER: &[&str] = &[
    "layer_kind",
    "depth",
    "randalign",
    "scaling",
    "seed",
    "epoch",
    "lr",
    "train_loss",
    "train_acc",
    "test_acc",
];

pub const SMOOTHNESS_HEADER: &[&str] = &[
    "layer_kind",
    "depth",
    "randalign",
    "scaling",
    "seed",
    "layer",
    "cosine",
    "norm_mean",
    "norm_std",
    "norm_min",
    "norm_max",
];

pub const SUMMARY_HEADER: &[&str] = &[
    "layer_kind",
    "depth",
    "randalign",
    "scaling",
    "n_seeds",
    "train_acc_mean",
    "train_acc_std",
    "test_acc_mean",
    "test_acc_std",
    "final_cosine_mean",
    "epochs_mean",
    "diverged_count",
];

/// Builds CSV text from a header and rows.
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn runs_rows(cfg: &ExperimentConfig, jobs: &[Job], records: &[RunRecord]) -> Vec<Vec<String>> {
    jobs.iter()
        .zip(records)
        .map(|(job, r)| {
            let last = r.epochs.last();
            let pick = |f: fn(&randalign_core::training::EpochRecord) -> f64| last.map_or(f64::NAN, f);
            let smooth = |f: fn(&randalign_core::diagnostics::SmoothnessReport) -> f64| r.smoothness.as_ref().map_or(f64::NAN, f);
            let mut row = key_fields(cfg, job);
            row.extend([
                job.seed.to_string(),
                r.status.as_str().to_string(),
                r.epochs.len().to_string(),
                sig6(pick(|e| e.lr)),
                sig6(pick(|e| e.train_loss)),
                sig6(pick(|e| e.train_acc)),
                sig6(pick(|e| e.test_acc)),
                sig6(smooth(|s| s.final_cosine())),
                sig6(smooth(|s| *s.norm_mean.last().unwrap_or(&f64::NAN))),
                sig6(smooth(|s| *s.norm_std.last().unwrap_or(&f64::NAN))),
            ]);
            row
        })
        .collect()
}

pub fn epochs_rows(cfg: &ExperimentConfig, jobs: &[Job], records: &[RunRecord]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (job, r) in jobs.iter().zip(records) {
        for e in &r.epochs {
            let mut row = key_fields(cfg, job);
            row.extend([
                job.seed.to_string(),
                e.epoch.to_string(),
                sig6(e.lr),
                sig6(e.train_loss),
                sig6(e.train_acc),
                sig6(e.test_acc),
            ]);
            rows.push(row);
        }
    }
    rows
}

pub fn smoothness_rows(cfg: &ExperimentConfig, jobs: &[Job], records: &[RunRecord]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (job, r) in jobs.iter().zip(records) {
        let Some(s) = &r.smoothness else { continue };
        for k in 0..s.cosine.len() {
            let mut row = key_fields(cfg, job);
            row.extend([
                job.seed.to_string(),
                k.to_string(),
                sig6(s.cosine[k]),
                sig6(s.norm_mean[k]),
                sig6(s.norm_std[k]),
                sig6(s.norm_min[k]),
                sig6(s.norm_max[k]),
            ]);
            rows.push(row);
        }
    }
    rows
}

/// Mean and sample standard deviation (`NaN` below two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One row per `(depth, randalign, scaling)` cell. Diverged runs are counted
/// but left out of the means.
pub fn summary_rows(cfg: &ExperimentConfig, jobs: &[Job], records: &[RunRecord]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    let mut i = 0;
    while i < jobs.len() {
        let cell = (jobs[i].depth, jobs[i].randalign, jobs[i].scaling);
        let mut j = i;
        while j < jobs.len() && (jobs[j].depth, jobs[j].randalign, jobs[j].scaling) == cell {
            j += 1;
        }
        let group = &records[i..j];
        let ok: Vec<&RunRecord> = group.iter().filter(|r| !r.status.diverged()).collect();
        let last = |f: fn(&randalign_core::training::EpochRecord) -> f64| -> Vec<f64> {
            ok.iter().filter_map(|r| r.epochs.last().map(f)).collect()
        };
        let (train_m, train_s) = mean_std(&last(|e| e.train_acc));
        let (test_m, test_s) = mean_std(&last(|e| e.test_acc));
        let cosines: Vec<f64> = ok
            .iter()
            .filter_map(|r| r.smoothness.as_ref().map(|s| s.final_cosine()))
            .filter(|c| !c.is_nan())
            .collect();
        let epochs: Vec<f64> = ok.iter().map(|r| r.epochs.len() as f64).collect();
        let mut row = key_fields(cfg, &jobs[i]);
        row.extend([
            group.len().to_string(),
            sig6(train_m),
            sig6(train_s),
            sig6(test_m),
            sig6(test_s),
            sig6(mean_std(&cosines).0),
            sig6(mean_std(&epochs).0),
            (group.len() - ok.len()).to_string(),
        ]);
        rows.push(row);
        i = j;
    }
    rows
}

/// Everything `run` produces, before it touches the disk.
#[derive(Clone, Debug)]
pub struct MatrixOutput {
    pub jobs: Vec<Job>,
    pub records: Vec<RunRecord>,
    pub runs_csv: String,
    pub epochs_csv: String,
    pub smoothness_csv: String,
    pub summary_csv: String,
}

impl MatrixOutput {
    pub fn diverged(&self) -> usize {
        self.records.iter().filter(|r| r.status.diverged()).count()
    }
}

pub fn execute(cfg: &ExperimentConfig, workers: usize) -> CliResult<MatrixOutput> {
    let data = cfg.dataset.generate().map_err(|e| CliError::Config(format!("dataset: {e}")))?;
    let jobs = jobs(cfg);
    let records = run_jobs(cfg, &data, &jobs, workers)?;
    Ok(MatrixOutput {
        runs_csv: csv_text(RUNS_HEADER, &runs_rows(cfg, &jobs, &records))?,
        epochs_csv: csv_text(EPOCHS_HEADER, &epochs_rows(cfg, &jobs, &records))?,
        smoothness_csv: csv_text(SMOOTHNESS_HEADER, &smoothness_rows(cfg, &jobs, &records))?,
        summary_csv: csv_text(SUMMARY_HEADER, &summary_rows(cfg, &jobs, &records))?,
        jobs,
        records,
    })
}

pub fn write_outputs(out: &MatrixOutput, dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    for (name, text) in [
        ("runs.csv", &out.runs_csv),
        ("epochs.csv", &out.epochs_csv),
        ("smoothness.csv", &out.smoothness_csv),
        ("summary.csv", &out.summary_csv),
    ] {
        std::fs::write(dir.join(name), text)?;
    }
    Ok(())
}

/// `run <config>`: trains the matrix and writes the four CSV tables.
/// Returns the output and the number of diverged runs.
pub fn run_matrix(config_path: &Path, output_override: Option<&Path>) -> CliResult<MatrixOutput> {
    let cfg = ExperimentConfig::load(config_path)?;
    let out = execute(&cfg, worker_count())?;
    write_outputs(&out, output_override.unwrap_or(&cfg.output_dir))?;
    Ok(out)
}
