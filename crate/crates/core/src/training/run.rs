//! The seeded training loop.

use std::time::Instant;

use super::{adam_step, argmax_rows, balanced_accuracy, class_weights, cross_entropy_sum, plateau_update, AdamState, PlateauSchedule};
use crate::autodiff::Tape;
use crate::diagnostics::SmoothnessReport;
use crate::error::{Error, Result};
use crate::graph::{LabeledGraph, LabeledGraphSet, Split};
use crate::layers::{Model, ModelConfig, ModelParams, PreparedGraph};
use crate::randalign::{AlignConfig, AlignMode};
use crate::rng::{seeded, streams};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub patience: usize,
    pub min_lr: f64,
    /// Hard cap on epochs; the schedule usually halts earlier.
    pub max_epochs: usize,
    /// Training graphs per optimizer step; 0 means all of them.
    pub batch_size: usize,
    /// Inverse-frequency class weights in the loss.
    pub class_weighted: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            patience: 10,
            min_lr: 1e-6,
            max_epochs: 1000,
            batch_size: 0,
            class_weighted: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    /// Learning rate fell below the minimum.
    Converged,
    /// Stopped at `max_epochs`.
    EpochCap,
    /// Non-finite training loss at the given epoch.
    Diverged { epoch: usize },
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::EpochCap => "epoch_cap",
            RunStatus::Diverged { .. } => "diverged",
        }
    }

    pub fn diverged(&self) -> bool {
        matches!(self, RunStatus::Diverged { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Learning rate used during this epoch.
    pub lr: f64,
    /// Weighted mean training loss accumulated during the epoch.
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// Outcome of one training run. Equality ignores `wall_seconds`.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub seed: u64,
    pub model_cfg: ModelConfig,
    pub train_cfg: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    /// Eval-mode statistics averaged over the test graphs of the final model.
    pub smoothness: Option<SmoothnessReport>,
    pub status: RunStatus,
    pub params: ModelParams,
    /// Align mode of every forward pass behind a reported metric.
    pub metric_modes: Vec<AlignMode>,
    pub wall_seconds: f64,
}

impl PartialEq for RunRecord {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.model_cfg == other.model_cfg
            && self.train_cfg == other.train_cfg
            && bitwise_epochs(&self.epochs) == bitwise_epochs(&other.epochs)
            && self.smoothness == other.smoothness
            && self.status == other.status
            && self.params == other.params
            && self.metric_modes == other.metric_modes
    }
}

fn bitwise_epochs(e: &[EpochRecord]) -> Vec<[u64; 5]> {
    e.iter()
        .map(|r| {
            [
                r.epoch as u64,
                r.lr.to_bits(),
                r.train_loss.to_bits(),
                r.train_acc.to_bits(),
                r.test_acc.to_bits(),
            ]
        })
        .collect()
}

struct Prepared<'a> {
    data: &'a LabeledGraph,
    graph: PreparedGraph,
}

fn prepare<'a>(data: &'a LabeledGraphSet, split: Split, model_cfg: &ModelConfig) -> Vec<Prepared<'a>> {
    data.split(split)
        .map(|g| Prepared {
            data: g,
            graph: PreparedGraph::new(g.graph.clone(), model_cfg.layer_kind),
        })
        .collect()
}

/// Balanced accuracy over all nodes of `graphs` in eval mode, plus the
/// eval-mode embeddings of each graph.
fn eval_split(model: &Model, graphs: &[Prepared], modes: &mut Vec<AlignMode>) -> Result<(f64, Vec<Vec<crate::Matrix>>)> {
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    let mut embeddings = Vec::with_capacity(graphs.len());
    for g in graphs {
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let mut align = AlignConfig::new(AlignMode::Eval, model.cfg.align_scaling, seeded(0, 0));
        let pass = model.forward(&mut tape, &bound, &g.graph, &g.data.features, &mut align)?;
        modes.push(pass.mode);
        preds.extend(argmax_rows(tape.value(pass.logits)));
        labels.extend_from_slice(&g.data.labels);
        embeddings.push(pass.embeddings.iter().map(|t| tape.value(*t).clone()).collect());
    }
    Ok((balanced_accuracy(&preds, &labels, model.cfg.n_classes)?, embeddings))
}

/// Eval-mode balanced accuracy of `model` on one split.
pub fn evaluate(model: &Model, data: &LabeledGraphSet, split: Split) -> Result<f64> {
    let graphs = prepare(data, split, &model.cfg);
    Ok(eval_split(model, &graphs, &mut Vec::new())?.0)
}

/// Trains a fresh model from `seed`.
///
/// Each epoch visits the training graphs in dataset order, one Adam step per
/// batch, with RandAlign coefficients drawn from the seed's alignment stream.
/// After every epoch both splits are scored in eval mode and the epoch's
/// training loss drives the plateau schedule.
pub fn train_run(model_cfg: &ModelConfig, data: &LabeledGraphSet, train_cfg: &TrainConfig, seed: u64) -> Result<RunRecord> {
    let start = Instant::now();
    if model_cfg.d_in != data.d_in() || model_cfg.n_classes != data.n_classes() {
        return Err(Error::validation(format!(
            "model expects d_in {} / {} classes, data has {} / {}",
            model_cfg.d_in,
            model_cfg.n_classes,
            data.d_in(),
            data.n_classes()
        )));
    }
    let train = prepare(data, Split::Train, model_cfg);
    let test = prepare(data, Split::Test, model_cfg);
    if train.is_empty() || test.is_empty() {
        return Err(Error::validation("train and test splits must be non-empty"));
    }
    let weights = if train_cfg.class_weighted {
        class_weights(train.iter().flat_map(|g| g.data.labels.iter()), data.n_classes())
    } else {
        vec![1.0; data.n_classes()]
    };

    let mut model = Model::new(model_cfg.clone(), seed)?;
    let shapes: Vec<_> = model.params.matrices_mut().iter().map(|m| m.shape()).collect();
    let mut adam = AdamState::new(train_cfg.lr, &shapes);
    let mut sched = PlateauSchedule::new(train_cfg.lr, train_cfg.patience);
    sched.min_lr = train_cfg.min_lr;
    let mut align = AlignConfig::new(AlignMode::Train, model_cfg.align_scaling, seeded(seed, streams::ALIGN_LAMBDA));
    let batch = if train_cfg.batch_size == 0 {
        train.len()
    } else {
        train_cfg.batch_size
    };

    let mut epochs = Vec::new();
    let mut modes = Vec::new();
    let mut status = RunStatus::EpochCap;
    'epochs: for epoch in 1..=train_cfg.max_epochs {
        adam.lr = sched.lr;
        let mut loss_sum = 0.0;
        let mut weight_sum = 0.0;
        for chunk in train.chunks(batch) {
            let chunk_weight: f64 = chunk
                .iter()
                .flat_map(|g| g.data.labels.iter())
                .map(|&l| weights[l])
                .sum();
            let mut grads: Option<Vec<crate::Matrix>> = None;
            for g in chunk {
                let mut tape = Tape::new();
                let bound = model.params.bind(&mut tape);
                let step = model
                    .forward(&mut tape, &bound, &g.graph, &g.data.features, &mut align)
                    .and_then(|pass| cross_entropy_sum(&mut tape, pass.logits, &g.data.labels, &weights));
                let (sum, w) = match step {
                    Ok(v) => v,
                    // Non-finite values reaching a guarded primitive.
                    Err(Error::Domain { .. }) => {
                        status = RunStatus::Diverged { epoch };
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                };
                let s = tape.value(sum)[(0, 0)];
                if !s.is_finite() {
                    status = RunStatus::Diverged { epoch };
                    break 'epochs;
                }
                loss_sum += s;
                weight_sum += w;
                let loss = tape.scale(sum, 1.0 / chunk_weight)?;
                tape.backward(loss)?;
                let g = ModelParams::grads(&tape, &bound);
                match &mut grads {
                    None => grads = Some(g),
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&g) {
                            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            if let Some(grads) = grads {
                let mut params = model.params.matrices_mut();
                adam_step(&mut params, &grads, &mut adam)?;
                if params.iter().any(|m| m.data().iter().any(|x| !x.is_finite())) {
                    status = RunStatus::Diverged { epoch };
                    break 'epochs;
                }
            }
        }
        let train_loss = loss_sum / weight_sum;
        let (train_acc, _) = eval_split(&model, &train, &mut modes)?;
        let (test_acc, _) = eval_split(&model, &test, &mut modes)?;
        epochs.push(EpochRecord {
            epoch,
            lr: adam.lr,
            train_loss,
            train_acc,
            test_acc,
        });
        let (_, halt) = plateau_update(&mut sched, train_loss);
        if halt {
            status = RunStatus::Converged;
            break;
        }
    }

    let smoothness = if status.diverged() {
        None
    } else {
        let (_, embeddings) = eval_split(&model, &test, &mut modes)?;
        let reports: Vec<_> = embeddings.iter().map(|e| SmoothnessReport::from_embeddings(e)).collect();
        Some(SmoothnessReport::average(&reports)?)
    };
    Ok(RunRecord {
        seed,
        model_cfg: model_cfg.clone(),
        train_cfg: train_cfg.clone(),
        epochs,
        smoothness,
        status,
        params: model.params,
        metric_modes: modes,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
