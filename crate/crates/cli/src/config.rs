//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, lists are comma separated and
//! integer lists also accept inclusive ranges (`0..4`). Booleans are
//! `on`/`off`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use randalign_core::graph::{two_clique_toy, LabeledGraphSet, SbmDatasetSpec};
use randalign_core::layers::LayerKind;
use randalign_core::training::TrainConfig;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    Sbm(SbmDatasetSpec),
    TwoClique {
        clique_size: usize,
        n_train: usize,
        n_test: usize,
    },
}

impl DatasetSpec {
    pub fn generate(&self) -> randalign_core::Result<LabeledGraphSet> {
        match self {
            DatasetSpec::Sbm(spec) => spec.generate(),
            DatasetSpec::TwoClique {
                clique_size,
                n_train,
                n_test,
            } => two_clique_toy(*clique_size, *n_train, *n_test),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub layer_kind: LayerKind,
    pub depths: Vec<usize>,
    pub randalign: Vec<bool>,
    /// Scaling settings crossed with `randalign = on`; irrelevant when off.
    pub scaling: Vec<bool>,
    pub seeds: Vec<u64>,
    pub d_hidden: usize,
    pub standardization: bool,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
}

const KEYS: &[&str] = &[
    "dataset",
    "sbm_block_sizes",
    "sbm_p_in",
    "sbm_p_out",
    "sbm_noise",
    "sbm_d_in",
    "two_clique_size",
    "n_train_graphs",
    "n_test_graphs",
    "data_seed",
    "layer_kind",
    "depths",
    "randalign",
    "scaling",
    "seeds",
    "d_hidden",
    "standardization",
    "lr",
    "patience",
    "min_lr",
    "max_epochs",
    "batch_size",
    "class_weighted",
    "output_dir",
];

fn err(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("line {line}: {msg}"))
}

struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.0.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn scalar<T: std::str::FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse()
                .map_err(|_| err(line, format!("{key}: cannot parse {v:?}"))),
        }
    }

    fn flag(&self, key: &str, default: bool) -> CliResult<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => parse_bool(v).ok_or_else(|| err(line, format!("{key}: expected on/off, got {v:?}"))),
        }
    }

    fn bools(&self, key: &str, default: &[bool]) -> CliResult<Vec<bool>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some((line, v)) => items(v)
                .map(|s| parse_bool(s).ok_or_else(|| err(line, format!("{key}: expected on/off, got {s:?}"))))
                .collect(),
        }
    }

    fn ints(&self, key: &str, default: &[u64]) -> CliResult<Vec<u64>> {
        let Some((line, v)) = self.raw(key) else {
            return Ok(default.to_vec());
        };
        let mut out = Vec::new();
        for item in items(v) {
            let bad = || err(line, format!("{key}: cannot parse {item:?}"));
            if let Some((a, b)) = item.split_once("..") {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b.trim().parse().map_err(|_| bad())?;
                if b < a {
                    return Err(bad());
                }
                out.extend(a..=b);
            } else {
                out.push(item.parse().map_err(|_| bad())?);
            }
        }
        Ok(out)
    }
}

fn items(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "on" | "true" | "yes" | "1" => Some(true),
        "off" | "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected `key = value`, got {content:?}")))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(err(line, format!("unknown key {k:?}")));
            }
            if map.insert(k.to_string(), (line, v.trim().to_string())).is_some() {
                return Err(err(line, format!("duplicate key {k:?}")));
            }
        }
        let e = Entries(map);

        let n_train = e.scalar("n_train_graphs", 100usize)?;
        let n_test = e.scalar("n_test_graphs", 30usize)?;
        let dataset = match e.raw("dataset").map(|(_, v)| v).unwrap_or("sbm") {
            "sbm" => DatasetSpec::Sbm(SbmDatasetSpec {
                block_sizes: e.ints("sbm_block_sizes", &[10; 6])?.into_iter().map(|x| x as usize).collect(),
                p_in: e.scalar("sbm_p_in", 0.5)?,
                p_out: e.scalar("sbm_p_out", 0.05)?,
                d_in: e.scalar("sbm_d_in", 6usize)?,
                noise: e.scalar("sbm_noise", 0.3)?,
                n_train,
                n_test,
                seed: e.scalar("data_seed", 0u64)?,
            }),
            "two_clique" => DatasetSpec::TwoClique {
                clique_size: e.scalar("two_clique_size", 5usize)?,
                n_train,
                n_test,
            },
            other => {
                let line = e.raw("dataset").map_or(0, |(l, _)| l);
                return Err(err(line, format!("unknown dataset {other:?}")));
            }
        };
        let layer_kind = match e.raw("layer_kind") {
            None => LayerKind::Gcn,
            Some((line, v)) => LayerKind::parse(v).ok_or_else(|| err(line, format!("unknown layer_kind {v:?}")))?,
        };
        let defaults = TrainConfig::default();
        let cfg = Self {
            dataset,
            layer_kind,
            depths: e.ints("depths", &[4])?.into_iter().map(|x| x as usize).collect(),
            randalign: e.bools("randalign", &[false, true])?,
            scaling: e.bools("scaling", &[true])?,
            seeds: e.ints("seeds", &[0])?,
            d_hidden: e.scalar("d_hidden", 16usize)?,
            standardization: e.flag("standardization", false)?,
            train: TrainConfig {
                lr: e.scalar("lr", defaults.lr)?,
                patience: e.scalar("patience", defaults.patience)?,
                min_lr: e.scalar("min_lr", defaults.min_lr)?,
                max_epochs: e.scalar("max_epochs", defaults.max_epochs)?,
                batch_size: e.scalar("batch_size", defaults.batch_size)?,
                class_weighted: e.flag("class_weighted", defaults.class_weighted)?,
            },
            output_dir: PathBuf::from(e.raw("output_dir").map(|(_, v)| v).unwrap_or("out")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate(&self) -> CliResult<()> {
        let fail = |m: &str| Err(CliError::Config(m.to_string()));
        if self.depths.is_empty() || self.depths.contains(&0) {
            return fail("depths must be a non-empty list of positive integers");
        }
        if self.seeds.is_empty() {
            return fail("seeds must be non-empty");
        }
        if self.randalign.is_empty() || self.scaling.is_empty() {
            return fail("randalign and scaling lists must be non-empty");
        }
        if self.d_hidden == 0 || self.train.patience == 0 {
            return fail("d_hidden and patience must be positive");
        }
        if !(self.train.lr >= 0.0 && self.train.lr.is_finite()) {
            return fail("lr must be a finite non-negative number");
        }
        Ok(())
    }
}
