//! RandAlign: random alignment of each node's new embedding with its
//! previous-layer embedding.
//!
//! For node `u` at layer `k`, with `h = h_u^(k-1)` and `hb = h̄_u^(k)` the
//! raw layer output,
//!
//! ```text
//! align(h, hb) = λ · (h / ||h||) · ||hb|| + (1 - λ) · hb
//! h_u^(k)      = h + align(h, hb)
//! ```
//!
//! `λ ~ U[0,1)` is drawn once per node per layer in training (ascending node
//! order) and fixed at 0.5 in evaluation. With scaling disabled the
//! interpolation uses `h` as is. When `||h|| < 1e-12` the alignment is
//! skipped and `hb` is returned.
//!
//! `λ` is a constant of the pass: no gradient flows into the sampling.

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::matrix::{l2_norm, Matrix};
use crate::rng::uniform01;
use rand_chacha::ChaCha8Rng;
use rand_core::RngCore;

/// Below this previous-embedding norm the alignment term is skipped.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Fixed interpolation coefficient used outside training.
pub const EVAL_LAMBDA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlignMode {
    Train,
    Eval,
}

/// Mode, scaling switch, and the λ stream of one run.
#[derive(Clone, Debug)]
pub struct AlignConfig<R = ChaCha8Rng> {
    pub mode: AlignMode,
    pub scaling: bool,
    rng: R,
    draws: u64,
}

impl<R: RngCore> AlignConfig<R> {
    pub fn new(mode: AlignMode, scaling: bool, rng: R) -> Self {
        Self {
            mode,
            scaling,
            rng,
            draws: 0,
        }
    }

    /// `U[0,1)` from the stream in training; exactly 0.5 in evaluation
    /// without touching the stream.
    pub fn sample_lambda(&mut self) -> f64 {
        match self.mode {
            AlignMode::Eval => EVAL_LAMBDA,
            AlignMode::Train => {
                self.draws += 1;
                uniform01(&mut self.rng)
            }
        }
    }

    /// Number of λ values drawn from the stream so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }
}

/// The alignment term for one node.
pub fn align_row(h_prev: &[f64], h_bar: &[f64], lambda: f64, scaling: bool) -> Vec<f64> {
    assert_eq!(h_prev.len(), h_bar.len());
    if !scaling {
        return h_prev
            .iter()
            .zip(h_bar)
            .map(|(p, b)| lambda * p + (1.0 - lambda) * b)
            .collect();
    }
    let prev_norm = l2_norm(h_prev);
    if prev_norm < DEGENERATE_NORM {
        return h_bar.to_vec();
    }
    let bar_norm = l2_norm(h_bar);
    h_prev
        .iter()
        .zip(h_bar)
        .map(|(p, b)| lambda * (p / prev_norm) * bar_norm + (1.0 - lambda) * b)
        .collect()
}

/// `H_prev + align(H_prev, H_bar)` row by row, drawing one λ per node from
/// `cfg`.
pub fn randalign_update<R: RngCore>(
    tape: &mut Tape,
    h_prev: Tensor,
    h_bar: Tensor,
    cfg: &mut AlignConfig<R>,
) -> Result<Tensor> {
    if h_prev.shape() != h_bar.shape() {
        return Err(Error::shape(
            "randalign_update",
            format!("{:?} vs {:?}", h_prev.shape(), h_bar.shape()),
        ));
    }
    let lambdas: Vec<f64> = (0..h_prev.rows()).map(|_| cfg.sample_lambda()).collect();
    randalign_update_with(tape, h_prev, h_bar, &lambdas, cfg.scaling)
}

/// [`randalign_update`] with caller-supplied per-node coefficients.
pub fn randalign_update_with(
    tape: &mut Tape,
    h_prev: Tensor,
    h_bar: Tensor,
    lambdas: &[f64],
    scaling: bool,
) -> Result<Tensor> {
    let n = h_prev.rows();
    if h_prev.shape() != h_bar.shape() || lambdas.len() != n {
        return Err(Error::shape(
            "randalign_update",
            format!(
                "{:?} vs {:?} with {} coefficients",
                h_prev.shape(),
                h_bar.shape(),
                lambdas.len()
            ),
        ));
    }
    let mut lam = lambdas.to_vec();
    let toward_prev = if scaling {
        let prev_norm = tape.row_l2_norm(h_prev)?;
        let bar_norm = tape.row_l2_norm(h_bar)?;
        // Degenerate rows get λ = 0 and a unit divisor so the (discarded)
        // quotient stays finite.
        let guard: Vec<f64> = tape
            .value(prev_norm)
            .data()
            .iter()
            .zip(lam.iter_mut())
            .map(|(&norm, l)| {
                if norm < DEGENERATE_NORM {
                    *l = 0.0;
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let guard = tape.leaf(Matrix::new(n, 1, guard)?);
        let divisor = tape.add(prev_norm, guard)?;
        let unit = tape.rowwise_div(h_prev, divisor)?;
        tape.rowwise_mul(unit, bar_norm)?
    } else {
        h_prev
    };
    let keep: Vec<f64> = lam.iter().map(|l| 1.0 - l).collect();
    let lam = tape.leaf(Matrix::new(n, 1, lam)?);
    let keep = tape.leaf(Matrix::new(n, 1, keep)?);
    let a = tape.rowwise_mul(toward_prev, lam)?;
    let b = tape.rowwise_mul(h_bar, keep)?;
    let align = tape.add(a, b)?;
    tape.add(h_prev, align)
}
