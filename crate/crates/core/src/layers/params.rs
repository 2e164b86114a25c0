//! Learnable parameters, their initialization, and flat CSV form.

use super::{LayerKind, ModelConfig};
use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::uniform_matrix;
use rand_core::RngCore;
use std::collections::BTreeMap;

/// `x W + b` with `w: (fan_in, fan_out)` and `b: (1, fan_out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: Matrix,
    pub b: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub w: Matrix,
    pub bias: Matrix,
    /// `(a_src, a_dst)`, each `(d_h, 1)`; GAT only.
    pub attention: Option<(Matrix, Matrix)>,
    /// `(gate_u, gate_v)`, each `(d_h, d_h)`; GatedGCN-lite only.
    pub gates: Option<(Matrix, Matrix)>,
    /// `(scale, shift)`, each `(1, d_h)`; present when standardization is on.
    pub norm: Option<(Matrix, Matrix)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub encoder: Linear,
    pub layers: Vec<LayerParams>,
    pub head: Linear,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLayer {
    pub w: Tensor,
    pub bias: Tensor,
    pub attention: Option<(Tensor, Tensor)>,
    pub gates: Option<(Tensor, Tensor)>,
    pub norm: Option<(Tensor, Tensor)>,
}

/// Parameters registered as leaves on one tape.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub encoder: BoundLinear,
    pub layers: Vec<BoundLayer>,
    pub head: BoundLinear,
    order: Vec<Tensor>,
}

impl BoundParams {
    /// Leaves in [`ModelParams::named`] order.
    pub fn tensors(&self) -> &[Tensor] {
        &self.order
    }
}

impl Linear {
    pub fn bind(&self, tape: &mut Tape) -> BoundLinear {
        BoundLinear {
            w: tape.leaf(self.w.clone()),
            b: tape.leaf(self.b.clone()),
        }
    }
}

impl LayerParams {
    /// Plain layer with weight `w` and zero bias.
    pub fn plain(w: Matrix) -> Self {
        let d = w.cols();
        Self {
            w,
            bias: Matrix::zeros(1, d),
            attention: None,
            gates: None,
            norm: None,
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundLayer {
        BoundLayer {
            w: tape.leaf(self.w.clone()),
            bias: tape.leaf(self.bias.clone()),
            attention: self
                .attention
                .as_ref()
                .map(|(a, b)| (tape.leaf(a.clone()), tape.leaf(b.clone()))),
            gates: self
                .gates
                .as_ref()
                .map(|(u, v)| (tape.leaf(u.clone()), tape.leaf(v.clone()))),
            norm: self
                .norm
                .as_ref()
                .map(|(s, t)| (tape.leaf(s.clone()), tape.leaf(t.clone()))),
        }
    }
}

fn fan_in_uniform<R: RngCore + ?Sized>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Matrix {
    let s = 1.0 / (fan_in as f64).sqrt();
    uniform_matrix(rng, rows, cols, -s, s)
}

impl ModelParams {
    /// Draws every weight from `U[-s, s]`, `s = 1/sqrt(fan_in)`, in this
    /// order: encoder `w`, `b`; then per layer `w`, `bias`, `a_src`,
    /// `a_dst` (GAT), `gate_u`, `gate_v` (GatedGCN); then head `w`, `b`.
    /// Biases use the fan-in of their weight. Standardization starts at
    /// scale 1, shift 0.
    pub fn init<R: RngCore + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.d_h;
        let encoder = Linear {
            w: fan_in_uniform(rng, cfg.d_in, d, cfg.d_in),
            b: fan_in_uniform(rng, 1, d, cfg.d_in),
        };
        let layers = (0..cfg.depth)
            .map(|_| {
                let w = fan_in_uniform(rng, d, d, d);
                let bias = fan_in_uniform(rng, 1, d, d);
                let attention = (cfg.layer_kind == LayerKind::Gat)
                    .then(|| (fan_in_uniform(rng, d, 1, d), fan_in_uniform(rng, d, 1, d)));
                let gates = (cfg.layer_kind == LayerKind::GatedGcn)
                    .then(|| (fan_in_uniform(rng, d, d, d), fan_in_uniform(rng, d, d, d)));
                let norm = cfg
                    .use_standardization
                    .then(|| (Matrix::filled(1, d, 1.0), Matrix::zeros(1, d)));
                LayerParams {
                    w,
                    bias,
                    attention,
                    gates,
                    norm,
                }
            })
            .collect();
        let head = Linear {
            w: fan_in_uniform(rng, d, cfg.n_classes, d),
            b: fan_in_uniform(rng, 1, cfg.n_classes, d),
        };
        Self {
            encoder,
            layers,
            head,
        }
    }

    /// Every parameter with its stable name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![
            ("encoder.w".to_string(), &self.encoder.w),
            ("encoder.b".to_string(), &self.encoder.b),
        ];
        for (k, layer) in self.layers.iter().enumerate() {
            let k = k + 1;
            out.push((format!("layer{k}.w"), &layer.w));
            out.push((format!("layer{k}.bias"), &layer.bias));
            if let Some((a, b)) = &layer.attention {
                out.push((format!("layer{k}.a_src"), a));
                out.push((format!("layer{k}.a_dst"), b));
            }
            if let Some((u, v)) = &layer.gates {
                out.push((format!("layer{k}.gate_u"), u));
                out.push((format!("layer{k}.gate_v"), v));
            }
            if let Some((s, t)) = &layer.norm {
                out.push((format!("layer{k}.norm_scale"), s));
                out.push((format!("layer{k}.norm_shift"), t));
            }
        }
        out.push(("head.w".to_string(), &self.head.w));
        out.push(("head.b".to_string(), &self.head.b));
        out
    }

    /// Mutable access in [`ModelParams::named`] order.
    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.encoder.w, &mut self.encoder.b];
        for layer in &mut self.layers {
            out.push(&mut layer.w);
            out.push(&mut layer.bias);
            if let Some((a, b)) = &mut layer.attention {
                out.push(a);
                out.push(b);
            }
            if let Some((u, v)) = &mut layer.gates {
                out.push(u);
                out.push(v);
            }
            if let Some((s, t)) = &mut layer.norm {
                out.push(s);
                out.push(t);
            }
        }
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        out
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let mut order = Vec::new();
        let mut leaf = |m: &Matrix| {
            let t = tape.leaf(m.clone());
            order.push(t);
            t
        };
        let encoder = BoundLinear {
            w: leaf(&self.encoder.w),
            b: leaf(&self.encoder.b),
        };
        let layers = self
            .layers
            .iter()
            .map(|l| BoundLayer {
                w: leaf(&l.w),
                bias: leaf(&l.bias),
                attention: l.attention.as_ref().map(|(a, b)| (leaf(a), leaf(b))),
                gates: l.gates.as_ref().map(|(u, v)| (leaf(u), leaf(v))),
                norm: l.norm.as_ref().map(|(s, t)| (leaf(s), leaf(t))),
            })
            .collect();
        let head = BoundLinear {
            w: leaf(&self.head.w),
            b: leaf(&self.head.b),
        };
        BoundParams {
            encoder,
            layers,
            head,
            order,
        }
    }

    /// Gradients of the bound leaves, in [`ModelParams::named`] order.
    pub fn grads(tape: &Tape, bound: &BoundParams) -> Vec<Matrix> {
        bound.order.iter().map(|t| tape.grad(*t).clone()).collect()
    }

    /// One line per entry: `name,row,col,value`, values in shortest
    /// round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,row,col,value\n");
        for (name, m) in self.named() {
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    out.push_str(&format!("{name},{i},{j},{}\n", m[(i, j)]));
                }
            }
        }
        out
    }

    /// Reads [`ModelParams::to_csv`] output for a model of shape `cfg`.
    pub fn from_csv(cfg: &ModelConfig, text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<(usize, usize, f64)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |detail: &str| Error::Parse {
                line: i + 1,
                detail: detail.to_string(),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(bad("expected name,row,col,value"));
            }
            let row = fields[1].parse().map_err(|_| bad("bad row"))?;
            let col = fields[2].parse().map_err(|_| bad("bad col"))?;
            let value = fields[3].parse().map_err(|_| bad("bad value"))?;
            entries
                .entry(fields[0].to_string())
                .or_default()
                .push((row, col, value));
        }

        let mut params = ModelParams::init(cfg, &mut crate::rng::seeded(0, 0));
        let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
        if entries.len() != names.len() {
            return Err(Error::validation(format!(
                "expected {} named matrices, found {}",
                names.len(),
                entries.len()
            )));
        }
        for (name, m) in names.iter().zip(params.matrices_mut()) {
            let list = entries
                .get(name)
                .ok_or_else(|| Error::validation(format!("missing matrix {name}")))?;
            if list.len() != m.len() {
                return Err(Error::validation(format!("{name}: wrong entry count")));
            }
            let mut seen = vec![false; m.len()];
            for &(i, j, v) in list {
                if i >= m.rows() || j >= m.cols() || seen[i * m.cols() + j] {
                    return Err(Error::validation(format!("{name}: bad entry ({i},{j})")));
                }
                seen[i * m.cols() + j] = true;
                m[(i, j)] = v;
            }
        }
        Ok(params)
    }
}
