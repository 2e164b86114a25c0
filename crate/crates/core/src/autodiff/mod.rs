//! Dense reverse-mode automatic differentiation.
//!
//! A [`Tape`] owns every value produced during one forward pass. Operations
//! append a record holding the output value and the ids of their inputs, so
//! records are topologically ordered by construction. [`Tape::backward`]
//! walks the records in reverse and accumulates `d loss / d node` into the
//! per-node gradient buffers.
//!
//! The tape is meant to live for one forward + backward pass; training code
//! builds a fresh tape per step.
//!
//! Conventions:
//! - `relu'(0) = 0`.
//! - `row_l2_norm` has zero gradient on an all-zero row.
//! - Calling `backward` twice without [`Tape::zero_grad`] adds the second
//!   pass on top of the first.

mod gradcheck;

pub use gradcheck::{finite_diff_check, finite_diff_check_many, numerical_gradient};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tensor {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Tensor {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

/// Differentiable primitive operations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PrimitiveKind {
    /// `(m,k) x (k,n) -> (m,n)`
    MatMul,
    Add,
    Sub,
    Hadamard,
    /// Elementwise division; the divisor must be non-zero.
    Div,
    Scale(f64),
    Relu,
    Sigmoid,
    Exp,
    /// Natural log; inputs must be strictly positive.
    Log,
    /// `(m,n) -> (1,1)`
    SumAll,
    /// `(n,d) -> (n,1)` with entry `||row_i||_2`.
    RowL2Norm,
    /// `(n,d) / (n,1)`: row `i` divided by the scalar in row `i`.
    RowwiseDiv,
    /// `(n,d) * (n,1)`: row `i` multiplied by the scalar in row `i`.
    RowwiseMul,
    Transpose,
}

impl PrimitiveKind {
    pub fn arity(&self) -> usize {
        use PrimitiveKind::*;
        match self {
            MatMul | Add | Sub | Hadamard | Div | RowwiseDiv | RowwiseMul => 2,
            Scale(_) | Relu | Sigmoid | Exp | Log | SumAll | RowL2Norm | Transpose => 1,
        }
    }

    fn name(&self) -> &'static str {
        use PrimitiveKind::*;
        match self {
            MatMul => "matmul",
            Add => "add",
            Sub => "sub",
            Hadamard => "hadamard",
            Div => "div",
            Scale(_) => "scale",
            Relu => "relu",
            Sigmoid => "sigmoid",
            Exp => "exp",
            Log => "log",
            SumAll => "sum_all",
            RowL2Norm => "row_l2_norm",
            RowwiseDiv => "rowwise_div",
            RowwiseMul => "rowwise_mul",
            Transpose => "transpose",
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Primitive(PrimitiveKind),
    MaskedSoftmax(Vec<bool>),
}

#[derive(Clone, Debug)]
struct Record {
    op: Op,
    inputs: Vec<usize>,
    value: Matrix,
}

/// Append-only record of one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    records: Vec<Record>,
    grads: Vec<Matrix>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Registers a leaf built from a shape and row-major values.
    pub fn tensor(&mut self, shape: (usize, usize), values: Vec<f64>) -> Result<Tensor> {
        let m = Matrix::new(shape.0, shape.1, values)?;
        Ok(self.leaf(m))
    }

    /// Registers a leaf holding `value`.
    pub fn leaf(&mut self, value: Matrix) -> Tensor {
        self.push(Op::Leaf, Vec::new(), value)
    }

    fn push(&mut self, op: Op, inputs: Vec<usize>, value: Matrix) -> Tensor {
        let id = self.records.len();
        let (rows, cols) = value.shape();
        self.grads.push(Matrix::zeros(rows, cols));
        self.records.push(Record { op, inputs, value });
        Tensor { id, rows, cols }
    }

    fn check(&self, t: Tensor) -> Result<()> {
        match self.records.get(t.id) {
            Some(r) if r.value.shape() == t.shape() => Ok(()),
            _ => Err(Error::shape("tape", format!("tensor {} is not on this tape", t.id))),
        }
    }

    pub fn value(&self, t: Tensor) -> &Matrix {
        &self.records[t.id].value
    }

    pub fn grad(&self, t: Tensor) -> &Matrix {
        &self.grads[t.id]
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    pub fn is_leaf(&self, t: Tensor) -> bool {
        matches!(self.records[t.id].op, Op::Leaf)
    }

    /// Applies `kind` to `inputs` and records the result.
    pub fn apply(&mut self, kind: PrimitiveKind, inputs: &[Tensor]) -> Result<Tensor> {
        if inputs.len() != kind.arity() {
            return Err(Error::shape(
                kind.name(),
                format!("expected {} inputs, got {}", kind.arity(), inputs.len()),
            ));
        }
        for &t in inputs {
            self.check(t)?;
        }
        let values: Vec<&Matrix> = inputs.iter().map(|t| self.value(*t)).collect();
        let out = forward(kind, &values)?;
        Ok(self.push(
            Op::Primitive(kind),
            inputs.iter().map(|t| t.id).collect(),
            out,
        ))
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.apply(PrimitiveKind::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.apply(PrimitiveKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.apply(PrimitiveKind::Sub, &[a, b])
    }

    pub fn hadamard(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.apply(PrimitiveKind::Hadamard, &[a, b])
    }

    pub fn div(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.apply(PrimitiveKind::Div, &[a, b])
    }

    pub fn scale(&mut self, a: Tensor, factor: f64) -> Result<Tensor> {
        self.apply(PrimitiveKind::Scale(factor), &[a])
    }

    pub fn relu(&mut self, a: Tensor) -> Result<Tensor> {
        self.apply(PrimitiveKind::Relu, &[a])
    }

    pub fn sigmoid(&mut self, a: Tensor) -> Result<Tensor> {
        self.apply(PrimitiveKind::Sigmoid, &[a])
    }

    pub fn exp(&mut self, a: Tensor) -> Result<Tensor> {
        self.apply(PrimitiveKind::Exp, &[a])
    }

    pub fn log(&mut self, a: Tensor) -> Result<Tensor> {
        self.apply(PrimitiveKind::Log, &[a])
    }

    pub fn sum_all(&mut self, a: Tensor) -> Result<Tensor> {
        self.apply(PrimitiveKind::SumAll, &[a])
    }

    pub fn row_l2_norm(&mut self, a: Tensor) -> Result<Tensor> {
        self.apply(PrimitiveKind::RowL2Norm, &[a])
    }

    pub fn rowwise_div(&mut self, x: Tensor, col: Tensor) -> Result<Tensor> {
        self.apply(PrimitiveKind::RowwiseDiv, &[x, col])
    }

    pub fn rowwise_mul(&mut self, x: Tensor, col: Tensor) -> Result<Tensor> {
        self.apply(PrimitiveKind::RowwiseMul, &[x, col])
    }

    pub fn transpose(&mut self, a: Tensor) -> Result<Tensor> {
        self.apply(PrimitiveKind::Transpose, &[a])
    }

    /// Row softmax restricted to the entries where `mask` is true.
    ///
    /// `mask` is row-major with the same shape as `scores`. Masked-out
    /// entries are exactly zero. Each row is shifted by its masked maximum
    /// before exponentiation.
    pub fn masked_row_softmax(&mut self, scores: Tensor, mask: &[bool]) -> Result<Tensor> {
        self.check(scores)?;
        let out = masked_softmax_forward(self.value(scores), mask)?;
        Ok(self.push(Op::MaskedSoftmax(mask.to_vec()), vec![scores.id], out))
    }

    /// Accumulates `d loss / d t` into the gradient buffer of every tensor
    /// `t` the loss depends on.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        self.check(loss)?;
        if loss.shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be (1,1), got {:?}", loss.shape()),
            ));
        }
        let mut adjoints: Vec<Option<Matrix>> = vec![None; loss.id + 1];
        adjoints[loss.id] = Some(Matrix::filled(1, 1, 1.0));
        for id in (0..=loss.id).rev() {
            let Some(g) = adjoints[id].take() else {
                continue;
            };
            let record = &self.records[id];
            match &record.op {
                Op::Leaf => {}
                Op::Primitive(kind) => {
                    let inputs: Vec<&Matrix> = record
                        .inputs
                        .iter()
                        .map(|&i| &self.records[i].value)
                        .collect();
                    let input_grads = backward_primitive(*kind, &inputs, &record.value, &g)?;
                    for (&i, ig) in record.inputs.iter().zip(input_grads) {
                        accumulate(&mut adjoints[i], ig);
                    }
                }
                Op::MaskedSoftmax(_) => {
                    let ig = masked_softmax_backward(&record.value, &g);
                    accumulate(&mut adjoints[record.inputs[0]], ig);
                }
            }
            for (acc, v) in self.grads[id].data_mut().iter_mut().zip(g.data()) {
                *acc += v;
            }
        }
        Ok(())
    }

    /// Recomputes every non-leaf value from the leaves.
    pub fn replay(&self) -> Result<Vec<Matrix>> {
        let mut values: Vec<Matrix> = Vec::with_capacity(self.records.len());
        for record in &self.records {
            let v = match &record.op {
                Op::Leaf => record.value.clone(),
                Op::Primitive(kind) => {
                    let inputs: Vec<&Matrix> = record.inputs.iter().map(|&i| &values[i]).collect();
                    forward(*kind, &inputs)?
                }
                Op::MaskedSoftmax(mask) => masked_softmax_forward(&values[record.inputs[0]], mask)?,
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Recorded values in tape order.
    pub fn values(&self) -> impl Iterator<Item = &Matrix> {
        self.records.iter().map(|r| &r.value)
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        None => *slot = Some(g),
    }
}

fn same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn column_for(op: &'static str, x: &Matrix, c: &Matrix) -> Result<()> {
    if c.shape() != (x.rows(), 1) {
        return Err(Error::shape(
            op,
            format!("column {:?} for matrix {:?}", c.shape(), x.shape()),
        ));
    }
    Ok(())
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::new(a.rows(), a.cols(), data).expect("shape preserved")
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn forward(kind: PrimitiveKind, inputs: &[&Matrix]) -> Result<Matrix> {
    use PrimitiveKind::*;
    let a = inputs[0];
    Ok(match kind {
        MatMul => a.matmul(inputs[1])?,
        Add => {
            same_shape("add", a, inputs[1])?;
            zip_map(a, inputs[1], |x, y| x + y)
        }
        Sub => {
            same_shape("sub", a, inputs[1])?;
            zip_map(a, inputs[1], |x, y| x - y)
        }
        Hadamard => {
            same_shape("hadamard", a, inputs[1])?;
            zip_map(a, inputs[1], |x, y| x * y)
        }
        Div => {
            same_shape("div", a, inputs[1])?;
            if let Some(bad) = inputs[1].data().iter().find(|v| **v == 0.0 || !v.is_finite()) {
                return Err(Error::Domain {
                    op: "div",
                    detail: format!("divisor {bad}"),
                });
            }
            zip_map(a, inputs[1], |x, y| x / y)
        }
        Scale(c) => a.map(|x| c * x),
        Relu => a.map(|x| if x > 0.0 { x } else { 0.0 }),
        Sigmoid => a.map(sigmoid),
        Exp => a.map(f64::exp),
        Log => {
            if let Some(bad) = a.data().iter().find(|v| v.is_nan() || **v <= 0.0) {
                return Err(Error::Domain {
                    op: "log",
                    detail: format!("log of {bad}"),
                });
            }
            a.map(f64::ln)
        }
        SumAll => Matrix::filled(1, 1, a.data().iter().sum()),
        RowL2Norm => Matrix::from_fn(a.rows(), 1, |i, _| crate::matrix::l2_norm(a.row(i))),
        RowwiseDiv => {
            let c = inputs[1];
            column_for("rowwise_div", a, c)?;
            if let Some(bad) = c.data().iter().find(|v| **v == 0.0 || !v.is_finite()) {
                return Err(Error::Domain {
                    op: "rowwise_div",
                    detail: format!("divisor {bad}"),
                });
            }
            Matrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] / c[(i, 0)])
        }
        RowwiseMul => {
            let c = inputs[1];
            column_for("rowwise_mul", a, c)?;
            Matrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] * c[(i, 0)])
        }
        Transpose => a.transpose(),
    })
}

fn backward_primitive(
    kind: PrimitiveKind,
    inputs: &[&Matrix],
    out: &Matrix,
    g: &Matrix,
) -> Result<Vec<Matrix>> {
    use PrimitiveKind::*;
    let a = inputs[0];
    Ok(match kind {
        MatMul => {
            let b = inputs[1];
            vec![g.matmul_nt(b)?, a.matmul_tn(g)?]
        }
        Add => vec![g.clone(), g.clone()],
        Sub => vec![g.clone(), g.map(|x| -x)],
        Hadamard => {
            let b = inputs[1];
            vec![zip_map(g, b, |x, y| x * y), zip_map(g, a, |x, y| x * y)]
        }
        Div => {
            let b = inputs[1];
            let da = zip_map(g, b, |x, y| x / y);
            let db = Matrix::from_fn(a.rows(), a.cols(), |i, j| {
                -g[(i, j)] * a[(i, j)] / (b[(i, j)] * b[(i, j)])
            });
            vec![da, db]
        }
        Scale(c) => vec![g.map(|x| c * x)],
        Relu => vec![zip_map(g, a, |gx, x| if x > 0.0 { gx } else { 0.0 })],
        Sigmoid => vec![zip_map(g, out, |gx, y| gx * y * (1.0 - y))],
        Exp => vec![zip_map(g, out, |gx, y| gx * y)],
        Log => vec![zip_map(g, a, |gx, x| gx / x)],
        SumAll => vec![Matrix::filled(a.rows(), a.cols(), g[(0, 0)])],
        RowL2Norm => vec![Matrix::from_fn(a.rows(), a.cols(), |i, j| {
            let norm = out[(i, 0)];
            if norm == 0.0 {
                0.0
            } else {
                g[(i, 0)] * a[(i, j)] / norm
            }
        })],
        RowwiseDiv => {
            let c = inputs[1];
            let dx = Matrix::from_fn(a.rows(), a.cols(), |i, j| g[(i, j)] / c[(i, 0)]);
            let dc = Matrix::from_fn(a.rows(), 1, |i, _| {
                let ci = c[(i, 0)];
                -crate::matrix::dot(g.row(i), a.row(i)) / (ci * ci)
            });
            vec![dx, dc]
        }
        RowwiseMul => {
            let c = inputs[1];
            let dx = Matrix::from_fn(a.rows(), a.cols(), |i, j| g[(i, j)] * c[(i, 0)]);
            let dc = Matrix::from_fn(a.rows(), 1, |i, _| crate::matrix::dot(g.row(i), a.row(i)));
            vec![dx, dc]
        }
        Transpose => vec![g.transpose()],
    })
}

fn masked_softmax_forward(scores: &Matrix, mask: &[bool]) -> Result<Matrix> {
    let (n, m) = scores.shape();
    if mask.len() != n * m {
        return Err(Error::shape(
            "masked_row_softmax",
            format!("mask of {} entries for scores {:?}", mask.len(), scores.shape()),
        ));
    }
    let mut out = Matrix::zeros(n, m);
    for i in 0..n {
        let row_mask = &mask[i * m..(i + 1) * m];
        let row = scores.row(i);
        let max = row
            .iter()
            .zip(row_mask)
            .filter(|(_, keep)| **keep)
            .map(|(s, _)| *s)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::DegenerateNeighborhood { row: i });
        }
        let out_row = out.row_mut(i);
        let mut total = 0.0;
        for ((o, s), keep) in out_row.iter_mut().zip(row).zip(row_mask) {
            if *keep {
                *o = (s - max).exp();
                total += *o;
            }
        }
        for o in out_row.iter_mut() {
            *o /= total;
        }
    }
    Ok(out)
}

fn masked_softmax_backward(y: &Matrix, g: &Matrix) -> Matrix {
    let mut dx = Matrix::zeros(y.rows(), y.cols());
    for i in 0..y.rows() {
        let inner = crate::matrix::dot(g.row(i), y.row(i));
        for ((d, gy), yy) in dx.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
            *d = yy * (gy - inner);
        }
    }
    dx
}

#[cfg(test)]
mod tests;
