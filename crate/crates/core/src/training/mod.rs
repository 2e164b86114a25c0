//! Loss, optimizer, learning-rate schedule, metrics and the training loop.

mod run;

pub use run::{evaluate, train_run, EpochRecord, RunRecord, RunStatus, TrainConfig};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Sum of `w[label_i] · (−log softmax(logits)_i[label_i])` over rows, and the
/// total weight `Σ w[label_i]`.
pub fn cross_entropy_sum(
    tape: &mut Tape,
    logits: Tensor,
    labels: &[usize],
    class_weights: &[f64],
) -> Result<(Tensor, f64)> {
    let (n, c) = logits.shape();
    if labels.len() != n {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} labels for {n} rows", labels.len()),
        ));
    }
    if class_weights.len() != c || class_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::validation(format!(
            "need {c} positive class weights, got {:?}",
            class_weights
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::validation(format!("label {bad} out of range for {c} classes")));
    }
    // Shift each row by its (constant) maximum before exponentiating.
    let values = tape.value(logits);
    let shift = Matrix::from_fn(n, c, |i, _| values.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let shift = tape.leaf(shift);
    let shifted = tape.sub(logits, shift)?;
    let e = tape.exp(shifted)?;
    let ones = tape.leaf(Matrix::filled(c, 1, 1.0));
    let row_sums = tape.matmul(e, ones)?;
    let lse = tape.log(row_sums)?;
    let onehot = tape.leaf(Matrix::from_fn(n, c, |i, j| if labels[i] == j { 1.0 } else { 0.0 }));
    let picked = tape.hadamard(shifted, onehot)?;
    let picked = tape.matmul(picked, ones)?;
    let per_row = tape.sub(lse, picked)?;
    let w: Vec<f64> = labels.iter().map(|&l| class_weights[l]).collect();
    let total = w.iter().sum();
    let w = tape.leaf(Matrix::new(1, n, w)?);
    Ok((tape.matmul(w, per_row)?, total))
}

/// Class-weighted mean cross-entropy, `(1, 1)`.
pub fn cross_entropy_loss(tape: &mut Tape, logits: Tensor, labels: &[usize], class_weights: &[f64]) -> Result<Tensor> {
    if labels.is_empty() {
        return Err(Error::validation("cross-entropy of zero rows"));
    }
    let (sum, total) = cross_entropy_sum(tape, logits, labels, class_weights)?;
    tape.scale(sum, 1.0 / total)
}

/// Inverse class frequency, normalized to mean 1 over the classes present.
/// Absent classes get weight 1.
pub fn class_weights<'a>(labels: impl IntoIterator<Item = &'a usize>, n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let inv: Vec<f64> = counts.iter().map(|&c| if c > 0 { 1.0 / c as f64 } else { 0.0 }).collect();
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present == 0 {
        return vec![1.0; n_classes];
    }
    let mean = inv.iter().sum::<f64>() / present as f64;
    inv.iter().map(|&w| if w > 0.0 { w / mean } else { 1.0 }).collect()
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        }
    }

    pub fn moments(&self) -> (&[Matrix], &[Matrix]) {
        (&self.m, &self.v)
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(params: &mut [&mut Matrix], grads: &[Matrix], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} params, {} grads, {} buffers", params.len(), grads.len(), state.m.len()),
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("param {:?}, grad {:?}, buffer {:?}", p.shape(), g.shape(), m.shape()),
            ));
        }
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, x) in p.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *x -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Halve the learning rate when the monitored loss stops improving.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub best: f64,
    pub since_improvement: usize,
    pub min_lr: f64,
    /// Required absolute decrease for a metric to count as an improvement.
    pub tolerance: f64,
}

impl PlateauSchedule {
    pub fn new(lr: f64, patience: usize) -> Self {
        Self {
            lr,
            factor: 0.5,
            patience: patience.max(1),
            best: f64::INFINITY,
            since_improvement: 0,
            min_lr: 1e-6,
            tolerance: 1e-6,
        }
    }
}

/// Feeds one epoch's metric; returns the learning rate for the next epoch and
/// whether training should halt.
pub fn plateau_update(sched: &mut PlateauSchedule, epoch_metric: f64) -> (f64, bool) {
    if epoch_metric < sched.best - sched.tolerance {
        sched.best = epoch_metric;
        sched.since_improvement = 0;
    } else {
        sched.since_improvement += 1;
        if sched.since_improvement >= sched.patience {
            sched.lr *= sched.factor;
            sched.since_improvement = 0;
        }
    }
    (sched.lr, sched.lr < sched.min_lr)
}

/// Mean of per-class recalls over the classes present in `labels`.
pub fn balanced_accuracy(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::shape(
            "balanced_accuracy",
            format!("{} predictions for {} labels", preds.len(), labels.len()),
        ));
    }
    if labels.is_empty() {
        return Err(Error::validation("balanced accuracy of an empty set"));
    }
    let mut hits = vec![0usize; n_classes];
    let mut totals = vec![0usize; n_classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if l >= n_classes {
            return Err(Error::validation(format!("label {l} out of range for {n_classes} classes")));
        }
        totals[l] += 1;
        if p == l {
            hits[l] += 1;
        }
    }
    let recalls: Vec<f64> = hits
        .iter()
        .zip(&totals)
        .filter(|(_, &t)| t > 0)
        .map(|(&h, &t)| h as f64 / t as f64)
        .collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Row-wise argmax, first index on ties.
pub fn argmax_rows(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests;
