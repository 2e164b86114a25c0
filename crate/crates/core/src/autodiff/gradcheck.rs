//! Central finite-difference checks against the tape's analytic gradients.

use super::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

fn evaluate<F>(f: &F, inputs: &[Matrix]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Tensor]) -> Result<Tensor>,
{
    let mut tape = Tape::new();
    let leaves: Vec<Tensor> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = f(&mut tape, &leaves)?;
    if out.shape() != (1, 1) {
        return Err(Error::shape("finite_diff_check", "function must return a (1,1) tensor"));
    }
    Ok(tape.value(out)[(0, 0)])
}

/// Central-difference gradient of `f` with respect to `inputs[which]`.
pub fn numerical_gradient<F>(f: &F, inputs: &[Matrix], which: usize, eps: f64) -> Result<Matrix>
where
    F: Fn(&mut Tape, &[Tensor]) -> Result<Tensor>,
{
    let mut work: Vec<Matrix> = inputs.to_vec();
    let mut grad = Matrix::zeros(inputs[which].rows(), inputs[which].cols());
    for k in 0..inputs[which].len() {
        let x = inputs[which].data()[k];
        work[which].data_mut()[k] = x + eps;
        let plus = evaluate(f, &work)?;
        work[which].data_mut()[k] = x - eps;
        let minus = evaluate(f, &work)?;
        work[which].data_mut()[k] = x;
        grad.data_mut()[k] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

/// Largest relative error between analytic and central-difference gradients
/// over every entry of every input:
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)`.
pub fn finite_diff_check_many<F>(f: F, inputs: &[Matrix], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Tensor]) -> Result<Tensor>,
{
    let mut tape = Tape::new();
    let leaves: Vec<Tensor> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = f(&mut tape, &leaves)?;
    tape.backward(out)?;

    let mut worst: f64 = 0.0;
    for (which, leaf) in leaves.iter().enumerate() {
        let numeric = numerical_gradient(&f, inputs, which, eps)?;
        for (a, n) in tape.grad(*leaf).data().iter().zip(numeric.data()) {
            let denom = a.abs().max(n.abs()).max(1e-12);
            worst = worst.max((a - n).abs() / denom);
        }
    }
    Ok(worst)
}

/// Single-input form of [`finite_diff_check_many`].
pub fn finite_diff_check<F>(f: F, x: &Matrix, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Tensor) -> Result<Tensor>,
{
    finite_diff_check_many(|tape, xs| f(tape, xs[0]), std::slice::from_ref(x), eps)
}
