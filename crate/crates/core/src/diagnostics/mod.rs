//! Over-smoothing statistics and Jacobian-based influence scores.

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::{lazy_walk_distribution, Graph};
use crate::layers::{Model, PreparedGraph};
use crate::matrix::{dot, l2_norm, Matrix};
use crate::randalign::{AlignConfig, AlignMode};
use crate::rng::{seeded, uniform_matrix};

/// Mean cosine similarity over unordered pairs of rows. Zero rows are
/// skipped.
pub fn mean_pairwise_cosine(h: &Matrix) -> Result<f64> {
    let rows: Vec<(&[f64], f64)> = (0..h.rows())
        .map(|i| (h.row(i), l2_norm(h.row(i))))
        .filter(|(_, norm)| *norm > 0.0)
        .collect();
    if rows.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "pairwise cosine needs two nonzero rows, got {}",
            rows.len()
        )));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, (a, na)) in rows.iter().enumerate() {
        for (b, nb) in &rows[i + 1..] {
            total += (dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Row-norm `(mean, std, min, max)`, population standard deviation.
pub fn norm_stats(h: &Matrix) -> (f64, f64, f64, f64) {
    let norms: Vec<f64> = (0..h.rows()).map(|i| l2_norm(h.row(i))).collect();
    if norms.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    }
    let n = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / n;
    let var = norms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let max = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, var.sqrt(), min, max)
}

/// Per-layer smoothness statistics for `H^(0) ..= H^(K)`.
///
/// Cosine entries are `NaN` for a layer where no graph had two nonzero rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothnessReport {
    pub cosine: Vec<f64>,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    pub norm_min: Vec<f64>,
    pub norm_max: Vec<f64>,
}

impl SmoothnessReport {
    pub fn from_embeddings(layers: &[Matrix]) -> Self {
        let mut r = Self {
            cosine: Vec::new(),
            norm_mean: Vec::new(),
            norm_std: Vec::new(),
            norm_min: Vec::new(),
            norm_max: Vec::new(),
        };
        for h in layers {
            r.cosine.push(mean_pairwise_cosine(h).unwrap_or(f64::NAN));
            let (mean, std, min, max) = norm_stats(h);
            r.norm_mean.push(mean);
            r.norm_std.push(std);
            r.norm_min.push(min);
            r.norm_max.push(max);
        }
        r
    }

    /// Entry-wise mean of per-graph reports; `NaN` entries are left out.
    pub fn average(reports: &[SmoothnessReport]) -> Result<Self> {
        let first = reports
            .first()
            .ok_or_else(|| Error::validation("no reports to average"))?;
        let len = first.depth() + 1;
        if reports.iter().any(|r| r.depth() + 1 != len) {
            return Err(Error::validation("reports differ in depth"));
        }
        let avg = |pick: fn(&SmoothnessReport) -> &Vec<f64>| -> Vec<f64> {
            (0..len)
                .map(|k| {
                    let vals: Vec<f64> = reports
                        .iter()
                        .map(|r| pick(r)[k])
                        .filter(|v| !v.is_nan())
                        .collect();
                    if vals.is_empty() {
                        f64::NAN
                    } else {
                        vals.iter().sum::<f64>() / vals.len() as f64
                    }
                })
                .collect()
        };
        Ok(Self {
            cosine: avg(|r| &r.cosine),
            norm_mean: avg(|r| &r.norm_mean),
            norm_std: avg(|r| &r.norm_std),
            norm_min: avg(|r| &r.norm_min),
            norm_max: avg(|r| &r.norm_max),
        })
    }

    pub fn depth(&self) -> usize {
        self.cosine.len().saturating_sub(1)
    }

    pub fn final_cosine(&self) -> f64 {
        *self.cosine.last().unwrap_or(&f64::NAN)
    }
}

/// Influence of every node on one target node.
#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceReport {
    /// Node whose depth-`K` embedding is differentiated.
    pub target: usize,
    pub k: usize,
    /// `influence[v] = I_K(v, target)`.
    pub influence: Vec<f64>,
    /// `K`-step lazy-walk distribution started at `target`.
    pub walk: Vec<f64>,
    /// L∞ distance between the L1-normalized influence and `walk`.
    pub max_deviation: f64,
}

/// `I(v, target)` for every `v`: one backward pass from `1ᵀ f(H0)[target]`,
/// summing each row of the gradient at `H0`.
pub fn influence_on<F>(h0: &Matrix, target: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut Tape, Tensor) -> Result<Tensor>,
{
    if target >= h0.rows() {
        return Err(Error::validation(format!(
            "target {target} out of range for {} nodes",
            h0.rows()
        )));
    }
    let mut tape = Tape::new();
    let x = tape.leaf(h0.clone());
    let out = f(&mut tape, x)?;
    if out.rows() != h0.rows() {
        return Err(Error::shape(
            "influence_on",
            format!("{} output rows for {} nodes", out.rows(), h0.rows()),
        ));
    }
    let mut pick = Matrix::zeros(out.rows(), out.cols());
    pick.row_mut(target).fill(1.0);
    let pick = tape.leaf(pick);
    let masked = tape.hadamard(out, pick)?;
    let s = tape.sum_all(masked)?;
    tape.backward(s)?;
    let g = tape.grad(x);
    Ok((0..g.rows()).map(|i| g.row(i).iter().sum()).collect())
}

/// `I_K(u, v) = 1ᵀ (∂h_v^(K) / ∂h_u^(0)) 1` for an eval-mode model, with
/// `H0` the encoder output on `x`.
pub fn influence_score(model: &Model, graph: &PreparedGraph, x: &Matrix, u: usize, v: usize) -> Result<f64> {
    let n = graph.graph().n();
    if u >= n || v >= n {
        return Err(Error::validation(format!("nodes ({u}, {v}) out of range for {n}")));
    }
    let h0 = model.embeddings_eval(graph, x)?.swap_remove(0);
    Ok(model_influence_on(model, graph, &h0, v)?[u])
}

/// Influence of every node on `target` through the message-passing layers of
/// `model` in eval mode, starting from `h0`.
pub fn model_influence_on(model: &Model, graph: &PreparedGraph, h0: &Matrix, target: usize) -> Result<Vec<f64>> {
    influence_on(h0, target, |tape, h| {
        let bound = model.params.bind(tape);
        let g = graph.bind(tape);
        let mut align = AlignConfig::new(AlignMode::Eval, model.cfg.align_scaling, seeded(0, 0));
        let (embeddings, _) = model.propagate(tape, &bound, &g, h, &mut align)?;
        Ok(*embeddings.last().expect("non-empty"))
    })
}

/// `K` rounds of linear self-loop mean aggregation, `H ← P H`.
pub fn mean_aggregation(tape: &mut Tape, g: &Graph, h: Tensor, k: usize) -> Result<Tensor> {
    let p = tape.leaf(g.lazy_walk_matrix());
    let mut h = h;
    for _ in 0..k {
        h = tape.matmul(p, h)?;
    }
    Ok(h)
}

/// Influence on `target` in the linear mean-aggregation model compared with
/// the lazy walk from `target`.
pub fn mean_model_influence(g: &Graph, target: usize, k: usize, d_h: usize) -> Result<InfluenceReport> {
    let h0 = uniform_matrix(&mut seeded(target as u64, 0), g.n(), d_h, -1.0, 1.0);
    let influence = influence_on(&h0, target, |tape, h| mean_aggregation(tape, g, h, k))?;
    let walk = lazy_walk_distribution(g, target, k)?;
    let total: f64 = influence.iter().sum();
    let max_deviation = influence
        .iter()
        .zip(&walk)
        .map(|(i, w)| (i / total - w).abs())
        .fold(0.0, f64::max);
    Ok(InfluenceReport {
        target,
        k,
        influence,
        walk,
        max_deviation,
    })
}

/// Largest deviation between normalized influence and lazy-walk
/// distribution over all target nodes of a connected graph.
pub fn theorem1_proportionality(g: &Graph, k: usize, d_h: usize) -> Result<f64> {
    if !g.is_connected() {
        return Err(Error::validation("graph is not connected"));
    }
    if k == 0 || d_h == 0 {
        return Err(Error::validation("K and d_h must be at least 1"));
    }
    let mut worst: f64 = 0.0;
    for u in 0..g.n() {
        worst = worst.max(mean_model_influence(g, u, k, d_h)?.max_deviation);
    }
    Ok(worst)
}
