//! Message-passing layers and the node-classification model built on them.
//!
//! Embeddings are row-major: node `u`'s embedding is row `u`, so the
//! weight product `W h_u` is written `H W` here.

mod model;
mod params;

pub use model::{ForwardPass, Model, PreparedGraph};
pub use params::{BoundLayer, BoundLinear, BoundParams, LayerParams, Linear, ModelParams};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Denominator guard of the gated aggregation.
pub const GATE_EPS: f64 = 1e-6;
/// Variance guard of [`standardize`].
pub const STANDARDIZE_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerKind {
    Gcn,
    Gat,
    /// Residual-free gated GCN with node-derived edge gates.
    GatedGcn,
}

impl LayerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LayerKind::Gcn => "gcn",
            LayerKind::Gat => "gat",
            LayerKind::GatedGcn => "gatedgcn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcn" => Some(LayerKind::Gcn),
            "gat" => Some(LayerKind::Gat),
            "gatedgcn" | "gated_gcn" | "gatedgcn-lite" => Some(LayerKind::GatedGcn),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Nonlinearity {
    Relu,
    /// No activation; used by the linearized analysis models.
    Identity,
}

impl Nonlinearity {
    pub fn apply(&self, tape: &mut Tape, x: Tensor) -> Result<Tensor> {
        match self {
            Nonlinearity::Relu => tape.relu(x),
            Nonlinearity::Identity => Ok(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub layer_kind: LayerKind,
    pub depth: usize,
    pub d_in: usize,
    pub d_h: usize,
    pub n_classes: usize,
    pub use_randalign: bool,
    pub align_scaling: bool,
    pub use_standardization: bool,
    pub nonlinearity: Nonlinearity,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::validation("depth must be at least 1"));
        }
        if self.d_in == 0 || self.d_h == 0 || self.n_classes == 0 {
            return Err(Error::validation("widths must be at least 1"));
        }
        Ok(())
    }
}

/// Graph operators registered on a tape for one forward pass.
pub struct GraphTensors<'a> {
    pub n: usize,
    pub a_renorm: Option<Tensor>,
    pub mask: &'a [bool],
    /// `(E, n)` one-hot of the receiving node of each directed edge.
    pub edge_recv: Option<Tensor>,
    /// `(E, n)` one-hot of the sending node of each directed edge.
    pub edge_send: Option<Tensor>,
    /// `(n, E)` transpose of `edge_recv`.
    pub edge_recv_t: Option<Tensor>,
}

fn ones(tape: &mut Tape, rows: usize, cols: usize) -> Tensor {
    tape.leaf(Matrix::filled(rows, cols, 1.0))
}

/// Adds the `(1, d)` row `bias` to every row of `h`.
pub fn add_bias(tape: &mut Tape, h: Tensor, bias: Tensor) -> Result<Tensor> {
    let col = ones(tape, h.rows(), 1);
    let spread = tape.matmul(col, bias)?;
    tape.add(h, spread)
}

fn linear(tape: &mut Tape, x: Tensor, p: &BoundLinear) -> Result<Tensor> {
    let xw = tape.matmul(x, p.w)?;
    add_bias(tape, xw, p.b)
}

/// Input encoder `H0 = X W_enc + b`, no activation.
pub fn encode(tape: &mut Tape, x: Tensor, p: &BoundLinear) -> Result<Tensor> {
    linear(tape, x, p)
}

fn missing(op: &'static str, what: &str) -> Error {
    Error::shape(op, format!("missing {what}"))
}

/// `σ(A_renorm H W + b)`.
pub fn gcn_forward(
    tape: &mut Tape,
    g: &GraphTensors,
    h: Tensor,
    p: &BoundLayer,
    nl: Nonlinearity,
) -> Result<Tensor> {
    let a = g.a_renorm.ok_or_else(|| missing("gcn_forward", "A_renorm"))?;
    let hw = tape.matmul(h, p.w)?;
    let agg = tape.matmul(a, hw)?;
    let out = add_bias(tape, agg, p.bias)?;
    nl.apply(tape, out)
}

/// Single-head attention over `N(u) ∪ {u}` with raw scores
/// `a_src·(W h_u) + a_dst·(W h_v)` (no LeakyReLU). Returns the output and
/// the attention matrix.
pub fn gat_forward(
    tape: &mut Tape,
    g: &GraphTensors,
    h: Tensor,
    p: &BoundLayer,
    nl: Nonlinearity,
) -> Result<(Tensor, Tensor)> {
    let (a_src, a_dst) = p.attention.ok_or_else(|| missing("gat_forward", "attention vectors"))?;
    let n = g.n;
    let hw = tape.matmul(h, p.w)?;
    let src = tape.matmul(hw, a_src)?;
    let dst = tape.matmul(hw, a_dst)?;
    let row_ones = ones(tape, 1, n);
    let col_ones = ones(tape, n, 1);
    let src_part = tape.matmul(src, row_ones)?;
    let dst_t = tape.transpose(dst)?;
    let dst_part = tape.matmul(col_ones, dst_t)?;
    let scores = tape.add(src_part, dst_part)?;
    let alpha = tape.masked_row_softmax(scores, g.mask)?;
    let agg = tape.matmul(alpha, hw)?;
    let out = add_bias(tape, agg, p.bias)?;
    Ok((nl.apply(tape, out)?, alpha))
}

/// GatedGCN-lite:
/// `σ(W h_u + Σ_v η_uv ⊙ W h_v / (Σ_v η_uv + ε) + b)` with
/// `η_uv = sigmoid(U h_u + V h_v)` over `v ∈ N(u)`.
pub fn gatedgcn_forward(
    tape: &mut Tape,
    g: &GraphTensors,
    h: Tensor,
    p: &BoundLayer,
    nl: Nonlinearity,
) -> Result<Tensor> {
    let (gate_u, gate_v) = p.gates.ok_or_else(|| missing("gatedgcn_forward", "gate weights"))?;
    let recv = g.edge_recv.ok_or_else(|| missing("gatedgcn_forward", "edge selectors"))?;
    let send = g.edge_send.ok_or_else(|| missing("gatedgcn_forward", "edge selectors"))?;
    let recv_t = g.edge_recv_t.ok_or_else(|| missing("gatedgcn_forward", "edge selectors"))?;

    let hw = tape.matmul(h, p.w)?;
    let hu = tape.matmul(h, gate_u)?;
    let hv = tape.matmul(h, gate_v)?;
    let gate_recv = tape.matmul(recv, hu)?;
    let gate_send = tape.matmul(send, hv)?;
    let gate_pre = tape.add(gate_recv, gate_send)?;
    let eta = tape.sigmoid(gate_pre)?;
    let sent = tape.matmul(send, hw)?;
    let msg = tape.hadamard(eta, sent)?;
    let num = tape.matmul(recv_t, msg)?;
    let gate_sum = tape.matmul(recv_t, eta)?;
    let eps = tape.leaf(Matrix::filled(g.n, h.cols(), GATE_EPS));
    let den = tape.add(gate_sum, eps)?;
    let agg = tape.div(num, den)?;
    let pre = tape.add(hw, agg)?;
    let out = add_bias(tape, pre, p.bias)?;
    nl.apply(tape, out)
}

/// Node logits `H W_head + b`.
pub fn readout_node(tape: &mut Tape, h: Tensor, head: &BoundLinear) -> Result<Tensor> {
    linear(tape, h, head)
}

/// Mean-pooled graph logits.
pub fn readout_graph(tape: &mut Tape, h: Tensor, head: &BoundLinear) -> Result<Tensor> {
    if h.rows() == 0 {
        return Err(Error::validation("readout of an empty graph"));
    }
    let pool = tape.leaf(Matrix::filled(1, h.rows(), 1.0 / h.rows() as f64));
    let pooled = tape.matmul(pool, h)?;
    linear(tape, pooled, head)
}

/// Per-column standardization over the nodes of one graph followed by a
/// learnable `(1, d)` scale and shift:
/// `scale ⊙ (h - mean) / sqrt(var + 1e-5) + shift`, population variance.
pub fn standardize(tape: &mut Tape, h: Tensor, scale: Tensor, shift: Tensor) -> Result<Tensor> {
    let (n, d) = h.shape();
    if n == 0 {
        return Err(Error::validation("standardize needs at least one row"));
    }
    let pool = tape.leaf(Matrix::filled(1, n, 1.0 / n as f64));
    let col = ones(tape, n, 1);
    let mean = tape.matmul(pool, h)?;
    let mean_rows = tape.matmul(col, mean)?;
    let centered = tape.sub(h, mean_rows)?;
    let sq = tape.hadamard(centered, centered)?;
    let var = tape.matmul(pool, sq)?;
    let eps = tape.leaf(Matrix::filled(1, d, STANDARDIZE_EPS));
    let guarded = tape.add(var, eps)?;
    let log = tape.log(guarded)?;
    let half = tape.scale(log, 0.5)?;
    let std = tape.exp(half)?;
    let std_rows = tape.matmul(col, std)?;
    let normed = tape.div(centered, std_rows)?;
    let scale_rows = tape.matmul(col, scale)?;
    let scaled = tape.hadamard(normed, scale_rows)?;
    add_bias(tape, scaled, shift)
}
