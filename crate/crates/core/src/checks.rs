//! Verification suites shared by the `verify` command and the acceptance
//! tests. Each suite returns a named pass/fail outcome with a short detail
//! line.

use std::time::Instant;

use crate::autodiff::{finite_diff_check_many, PrimitiveKind, Tape, Tensor};
use crate::diagnostics::{mean_pairwise_cosine, theorem1_proportionality};
use crate::error::Result;
use crate::graph::{random_connected_graph, two_node_fixture, Graph};
use crate::layers::{
    encode, gat_forward, gatedgcn_forward, gcn_forward, readout_graph, readout_node, standardize, BoundLayer,
    BoundLinear, LayerKind, LayerParams, Nonlinearity, PreparedGraph,
};
use crate::matrix::{dot, l2_norm, Matrix};
use crate::randalign::{randalign_update, randalign_update_with, AlignConfig, AlignMode};
use crate::rng::{seeded, uniform, uniform01, uniform_matrix};
use crate::training::cross_entropy_loss;

/// Result of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckOutcome {
    fn timed(name: &str, start: Instant, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    /// `PASS name (detail, 0.12s)` or `FAIL ...`.
    pub fn line(&self) -> String {
        format!(
            "{} {} ({}, {:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_SEEDS: u64 = 10;

type Case = (String, Box<dyn Fn(u64) -> Result<f64>>);

/// `Σ out ⊙ R` for a fixed random `R`, so no output entry has a structurally
/// zero adjoint.
fn project(tape: &mut Tape, out: Tensor, seed: u64) -> Result<Tensor> {
    let r = uniform_matrix(&mut seeded(seed, 101), out.rows(), out.cols(), -1.0, 1.0);
    let r = tape.leaf(r);
    let p = tape.hadamard(out, r)?;
    tape.sum_all(p)
}

fn primitive_cases() -> Vec<Case> {
    use PrimitiveKind::*;
    let kinds = [
        MatMul,
        Add,
        Sub,
        Hadamard,
        Div,
        Scale(-1.7),
        Relu,
        Sigmoid,
        Exp,
        Log,
        SumAll,
        RowL2Norm,
        RowwiseDiv,
        RowwiseMul,
        Transpose,
    ];
    let mut cases: Vec<Case> = kinds
        .into_iter()
        .map(|kind| {
            let f = move |seed: u64| -> Result<f64> {
                let mut rng = seeded(seed, 100);
                let (n, d) = (4, 3);
                let inputs = match kind {
                    MatMul => vec![
                        uniform_matrix(&mut rng, n, d, -1.0, 1.0),
                        uniform_matrix(&mut rng, d, 2, -1.0, 1.0),
                    ],
                    Add | Sub | Hadamard => vec![
                        uniform_matrix(&mut rng, n, d, -1.0, 1.0),
                        uniform_matrix(&mut rng, n, d, -1.0, 1.0),
                    ],
                    Div => vec![
                        uniform_matrix(&mut rng, n, d, -1.0, 1.0),
                        uniform_matrix(&mut rng, n, d, 0.5, 2.0),
                    ],
                    Log => vec![uniform_matrix(&mut rng, n, d, 0.5, 2.0)],
                    RowwiseDiv => vec![
                        uniform_matrix(&mut rng, n, d, -1.0, 1.0),
                        uniform_matrix(&mut rng, n, 1, 0.5, 2.0),
                    ],
                    RowwiseMul => vec![
                        uniform_matrix(&mut rng, n, d, -1.0, 1.0),
                        uniform_matrix(&mut rng, n, 1, -2.0, 2.0),
                    ],
                    _ => vec![uniform_matrix(&mut rng, n, d, -1.0, 1.0)],
                };
                finite_diff_check_many(
                    |tape, xs| {
                        let out = tape.apply(kind, xs)?;
                        project(tape, out, seed)
                    },
                    &inputs,
                    GRAD_EPS,
                )
            };
            (format!("{kind:?}"), Box::new(f) as Box<dyn Fn(u64) -> Result<f64>>)
        })
        .collect();
    cases.push((
        "MaskedRowSoftmax".into(),
        Box::new(|seed| {
            let mut rng = seeded(seed, 100);
            let scores = uniform_matrix(&mut rng, 4, 4, -2.0, 2.0);
            let mask: Vec<bool> = (0..16).map(|i| i % 5 == 0 || uniform01(&mut rng) < 0.5).collect();
            finite_diff_check_many(
                |tape, xs| {
                    let out = tape.masked_row_softmax(xs[0], &mask)?;
                    project(tape, out, seed)
                },
                &[scores],
                GRAD_EPS,
            )
        }),
    ));
    cases
}

/// A ring over `n` nodes plus random chords: every node has degree >= 2, so
/// gate normalizations stay away from the single-neighbour regime where
/// their true gradients are O(1e-8) and central differences lose precision.
pub fn ring_with_chords(n: usize, seed: u64) -> Result<Graph> {
    let base = random_connected_graph(n, 0.3, seed)?;
    let mut pairs: Vec<(usize, usize)> = base.edges().to_vec();
    pairs.extend((0..n).map(|i| (i, (i + 1) % n)));
    Graph::from_edge_list(n, &pairs)
}

fn layer_case(kind: LayerKind) -> Case {
    let f = move |seed: u64| -> Result<f64> {
        let mut rng = seeded(seed, 102);
        let d = 3;
        let g = ring_with_chords(5, seed)?;
        let prepared = PreparedGraph::new(g, kind);
        let h = uniform_matrix(&mut rng, 5, d, -1.0, 1.0);
        let w = uniform_matrix(&mut rng, d, d, -0.8, 0.8);
        let b = uniform_matrix(&mut rng, 1, d, -0.3, 0.3);
        let extra_a = uniform_matrix(&mut rng, d, 1, -1.0, 1.0);
        let extra_b = match kind {
            LayerKind::Gat => uniform_matrix(&mut rng, d, 1, -1.0, 1.0),
            _ => uniform_matrix(&mut rng, d, d, -1.0, 1.0),
        };
        let gate_u = uniform_matrix(&mut rng, d, d, -1.0, 1.0);
        let mut inputs = vec![h, w, b];
        match kind {
            LayerKind::Gcn => {}
            // The source-side attention vector cancels inside every softmax
            // row; its gradient is identically zero and it stays a constant.
            LayerKind::Gat => inputs.push(extra_b),
            LayerKind::GatedGcn => {
                inputs.push(gate_u);
                inputs.push(extra_b);
            }
        }
        finite_diff_check_many(
            |tape, xs| {
                let gt = prepared.bind(tape);
                let layer = BoundLayer {
                    w: xs[1],
                    bias: xs[2],
                    attention: match kind {
                        LayerKind::Gat => Some((tape.leaf(extra_a.clone()), xs[3])),
                        _ => None,
                    },
                    gates: match kind {
                        LayerKind::GatedGcn => Some((xs[3], xs[4])),
                        _ => None,
                    },
                    norm: None,
                };
                let out = match kind {
                    LayerKind::Gcn => gcn_forward(tape, &gt, xs[0], &layer, Nonlinearity::Relu)?,
                    LayerKind::Gat => gat_forward(tape, &gt, xs[0], &layer, Nonlinearity::Relu)?.0,
                    LayerKind::GatedGcn => gatedgcn_forward(tape, &gt, xs[0], &layer, Nonlinearity::Relu)?,
                };
                project(tape, out, seed)
            },
            &inputs,
            GRAD_EPS,
        )
    };
    (format!("{}_layer", kind.as_str()), Box::new(f))
}

fn model_part_cases() -> Vec<Case> {
    let mut cases: Vec<Case> = Vec::new();
    cases.push((
        "encode".into(),
        Box::new(|seed| {
            let mut rng = seeded(seed, 103);
            let inputs = [
                uniform_matrix(&mut rng, 5, 3, -1.0, 1.0),
                uniform_matrix(&mut rng, 3, 4, -1.0, 1.0),
                uniform_matrix(&mut rng, 1, 4, -1.0, 1.0),
            ];
            finite_diff_check_many(
                |tape, xs| {
                    let out = encode(tape, xs[0], &BoundLinear { w: xs[1], b: xs[2] })?;
                    project(tape, out, seed)
                },
                &inputs,
                GRAD_EPS,
            )
        }),
    ));
    for graph_level in [false, true] {
        cases.push((
            if graph_level { "readout_graph" } else { "readout_node" }.into(),
            Box::new(move |seed| {
                let mut rng = seeded(seed, 104);
                let inputs = [
                    uniform_matrix(&mut rng, 5, 3, -1.0, 1.0),
                    uniform_matrix(&mut rng, 3, 2, -1.0, 1.0),
                    uniform_matrix(&mut rng, 1, 2, -1.0, 1.0),
                ];
                finite_diff_check_many(
                    |tape, xs| {
                        let head = BoundLinear { w: xs[1], b: xs[2] };
                        let out = if graph_level {
                            readout_graph(tape, xs[0], &head)?
                        } else {
                            readout_node(tape, xs[0], &head)?
                        };
                        project(tape, out, seed)
                    },
                    &inputs,
                    GRAD_EPS,
                )
            }),
        ));
    }
    cases.push((
        "standardize".into(),
        Box::new(|seed| {
            let mut rng = seeded(seed, 105);
            let inputs = [
                uniform_matrix(&mut rng, 6, 3, -2.0, 2.0),
                uniform_matrix(&mut rng, 1, 3, 0.5, 1.5),
                uniform_matrix(&mut rng, 1, 3, -0.5, 0.5),
            ];
            finite_diff_check_many(
                |tape, xs| {
                    let out = standardize(tape, xs[0], xs[1], xs[2])?;
                    project(tape, out, seed)
                },
                &inputs,
                GRAD_EPS,
            )
        }),
    ));
    cases.push((
        "cross_entropy".into(),
        Box::new(|seed| {
            let mut rng = seeded(seed, 106);
            let logits = uniform_matrix(&mut rng, 6, 3, -2.0, 2.0);
            let labels: Vec<usize> = (0..6).map(|_| crate::rng::below(&mut rng, 3) as usize).collect();
            let weights = [0.6, 1.0, 1.4];
            finite_diff_check_many(
                |tape, xs| cross_entropy_loss(tape, xs[0], &labels, &weights),
                &[logits],
                GRAD_EPS,
            )
        }),
    ));
    for scaling in [true, false] {
        cases.push((
            format!("randalign_update_scaling_{}", if scaling { "on" } else { "off" }),
            Box::new(move |seed| {
                let mut rng = seeded(seed, 107);
                let inputs = [
                    uniform_matrix(&mut rng, 5, 3, -1.0, 1.0),
                    uniform_matrix(&mut rng, 5, 3, -1.0, 1.0),
                ];
                let lambdas: Vec<f64> = (0..5).map(|_| uniform01(&mut rng)).collect();
                finite_diff_check_many(
                    |tape, xs| {
                        let out = randalign_update_with(tape, xs[0], xs[1], &lambdas, scaling)?;
                        project(tape, out, seed)
                    },
                    &inputs,
                    GRAD_EPS,
                )
            }),
        ));
    }
    cases
}

/// Finite-difference check of every primitive, layer forward, the loss and
/// the alignment update, each on [`GRAD_SEEDS`] seeds.
pub fn gradient_suite() -> CheckOutcome {
    let start = Instant::now();
    let mut cases = primitive_cases();
    for kind in [LayerKind::Gcn, LayerKind::Gat, LayerKind::GatedGcn] {
        cases.push(layer_case(kind));
    }
    cases.extend(model_part_cases());
    let mut worst = (0.0f64, String::new());
    let mut failures = Vec::new();
    for (name, f) in &cases {
        for seed in 0..GRAD_SEEDS {
            match f(seed) {
                Ok(err) if err < GRAD_TOL => {
                    if err > worst.0 {
                        worst = (err, name.clone());
                    }
                }
                Ok(err) => failures.push(format!("{name} seed {seed}: {err:.3e}")),
                Err(e) => failures.push(format!("{name} seed {seed}: {e}")),
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("{} cases x {GRAD_SEEDS} seeds, worst {:.2e} ({})", cases.len(), worst.0, worst.1)
    } else {
        failures.join("; ")
    };
    CheckOutcome::timed("gradient_suite", start, failures.is_empty(), detail)
}

/// Influence/lazy-walk agreement on 20 seeded connected graphs with
/// `n ∈ [4, 16]`, `K ∈ [1, 5]`.
pub fn walk_proportionality_suite() -> CheckOutcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for i in 0..20u64 {
        let mut rng = seeded(i, 110);
        let n = 4 + crate::rng::below(&mut rng, 13) as usize;
        let k = 1 + crate::rng::below(&mut rng, 5) as usize;
        let res = random_connected_graph(n, 0.15, i).and_then(|g| theorem1_proportionality(&g, k, 4));
        match res {
            Ok(dev) => worst = worst.max(dev),
            Err(e) => errors.push(format!("graph {i}: {e}")),
        }
    }
    let passed = errors.is_empty() && worst < 1e-9;
    let detail = if errors.is_empty() {
        format!("20 graphs, max deviation {worst:.2e}")
    } else {
        errors.join("; ")
    };
    CheckOutcome::timed("walk_proportionality", start, passed, detail)
}

/// Initial embeddings of the two-node smoothing fixture.
pub const SMOOTHING_INITIAL: [[f64; 2]; 2] = [[1.0, 0.01], [-1.0, 0.01]];
pub const SMOOTHING_LAYERS: usize = 16;

/// Per-layer cosine of the two node embeddings, `H^(1) ..= H^(K)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingTrace {
    pub baseline: Vec<f64>,
    pub aligned: Vec<f64>,
}

/// Two-node graph, parameter-free attention layer (identity weight, zero
/// attention vectors, no nonlinearity), with and without eval-mode
/// alignment.
pub fn two_node_smoothing(initial: [[f64; 2]; 2], layers: usize) -> Result<SmoothingTrace> {
    let prepared = PreparedGraph::new(two_node_fixture(), LayerKind::Gat);
    let mut params = LayerParams::plain(Matrix::identity(2));
    params.attention = Some((Matrix::zeros(2, 1), Matrix::zeros(2, 1)));
    let h0 = Matrix::from_rows(&[initial[0].to_vec(), initial[1].to_vec()])?;
    let mut trace = SmoothingTrace {
        baseline: Vec::new(),
        aligned: Vec::new(),
    };
    for aligned in [false, true] {
        let mut tape = Tape::new();
        let g = prepared.bind(&mut tape);
        let layer = params.bind(&mut tape);
        let mut align = AlignConfig::new(AlignMode::Eval, true, seeded(0, 0));
        let mut h = tape.leaf(h0.clone());
        let out = if aligned { &mut trace.aligned } else { &mut trace.baseline };
        for _ in 0..layers {
            let (h_bar, _) = gat_forward(&mut tape, &g, h, &layer, Nonlinearity::Identity)?;
            h = if aligned {
                randalign_update(&mut tape, h, h_bar, &mut align)?
            } else {
                h_bar
            };
            out.push(mean_pairwise_cosine(tape.value(h))?);
        }
    }
    Ok(trace)
}

/// Smoothing without alignment, and its reduction with eval-mode alignment,
/// on the two-node fixture.
pub fn smoothing_gap_check() -> CheckOutcome {
    let start = Instant::now();
    let (passed, detail) = match two_node_smoothing(SMOOTHING_INITIAL, SMOOTHING_LAYERS) {
        Ok(t) => {
            let monotone = t.baseline.windows(2).all(|w| w[1] >= w[0] - 1e-12);
            let last = t.baseline[SMOOTHING_LAYERS - 1];
            let gap = last - t.aligned[SMOOTHING_LAYERS - 1];
            (
                monotone && last >= 1.0 - 1e-3 && gap >= 0.05,
                format!(
                    "baseline monotone={monotone}, cos16 {:.6} vs aligned {:.6}, gap {:.4}",
                    last,
                    t.aligned[SMOOTHING_LAYERS - 1],
                    gap
                ),
            )
        }
        Err(e) => (false, e.to_string()),
    };
    CheckOutcome::timed("two_node_smoothing", start, passed, detail)
}

/// Signature of a row alignment function `(h_prev, h_bar, λ, scaling)`.
pub type AlignFn = fn(&[f64], &[f64], f64, bool) -> Vec<f64>;

fn norm(v: &[f64]) -> f64 {
    l2_norm(v)
}

fn angle(a: &[f64], b: &[f64]) -> f64 {
    (dot(a, b) / (norm(a) * norm(b))).clamp(-1.0, 1.0).acos()
}

/// Counts of invariant violations in a random sweep of `align`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AlignViolations {
    pub norm_bound: usize,
    pub endpoints: usize,
    pub parallel: usize,
    pub monotone_angle: usize,
}

impl AlignViolations {
    pub fn total(&self) -> usize {
        self.norm_bound + self.endpoints + self.parallel + self.monotone_angle
    }
}

/// Norm bound, endpoint identities, parallel collapse and angle monotonicity
/// of `align` (scaling on) over `trials` random triples.
pub fn align_violations(align: AlignFn, trials: usize, seed: u64) -> AlignViolations {
    const TOL: f64 = 1e-9;
    let mut rng = seeded(seed, 120);
    let mut v = AlignViolations::default();
    for _ in 0..trials {
        let d = 1 + crate::rng::below(&mut rng, 6) as usize;
        let h: Vec<f64> = (0..d).map(|_| uniform(&mut rng, -2.0, 2.0)).collect();
        let hb: Vec<f64> = (0..d).map(|_| uniform(&mut rng, -2.0, 2.0)).collect();
        let lam = uniform01(&mut rng);
        let c = uniform(&mut rng, 0.1, 5.0);
        let out = align(&h, &hb, lam, true);
        if norm(&out) > norm(&hb) * (1.0 + TOL) + TOL {
            v.norm_bound += 1;
        }
        let at0 = align(&h, &hb, 0.0, true);
        let at1 = align(&h, &hb, 1.0, true);
        let scale = norm(&hb) / norm(&h);
        if at0.iter().zip(&hb).any(|(a, b)| (a - b).abs() > TOL)
            || at1.iter().zip(&h).any(|(a, p)| (a - p * scale).abs() > TOL)
        {
            v.endpoints += 1;
        }
        let par: Vec<f64> = hb.iter().map(|x| c * x).collect();
        if align(&par, &hb, lam, true)
            .iter()
            .zip(&hb)
            .any(|(a, b)| (a - b).abs() > TOL * (1.0 + b.abs()))
        {
            v.parallel += 1;
        }
        if d >= 2 && angle(&h, &hb) > 1e-6 && angle(&h, &hb) < std::f64::consts::PI - 1e-6 {
            let lo = uniform01(&mut rng);
            let hi = lo + (1.0 - lo) * uniform01(&mut rng);
            let a_lo = angle(&align(&h, &hb, lo, true), &hb);
            let a_hi = angle(&align(&h, &hb, hi, true), &hb);
            if a_hi < a_lo - 1e-7 {
                v.monotone_angle += 1;
            }
        }
    }
    v
}

pub const ALIGN_TRIALS: usize = 10_000;

pub fn align_algebra_check(align: AlignFn) -> CheckOutcome {
    let start = Instant::now();
    let v = align_violations(align, ALIGN_TRIALS, 0);
    CheckOutcome::timed(
        "align_algebra",
        start,
        v.total() == 0,
        format!(
            "{ALIGN_TRIALS} triples, violations: norm {} endpoint {} parallel {} angle {}",
            v.norm_bound, v.endpoints, v.parallel, v.monotone_angle
        ),
    )
}

/// All verification checks with the library's own alignment function.
pub fn standard_checks() -> Vec<CheckOutcome> {
    vec![
        smoothing_gap_check(),
        walk_proportionality_suite(),
        align_algebra_check(crate::randalign::align_row),
        gradient_suite(),
    ]
}
