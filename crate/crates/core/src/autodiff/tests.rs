use super::*;
use crate::rng::{seeded, uniform_matrix};

fn m(rows: &[&[f64]]) -> Matrix {
    Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

#[test]
fn constructor_shapes() {
    let mut tape = Tape::new();
    let t = tape.tensor((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(tape.value(t), &m(&[&[1.0, 2.0], &[3.0, 4.0]]));
    assert_eq!(tape.grad(t), &Matrix::zeros(2, 2));
    let z = tape.tensor((1, 1), vec![0.0]).unwrap();
    assert_eq!(tape.value(z).data(), &[0.0]);
    let e = tape.tensor((0, 3), vec![]).unwrap();
    assert_eq!(e.shape(), (0, 3));
    assert!(matches!(
        tape.tensor((2, 2), vec![1.0]),
        Err(Error::Shape { .. })
    ));
}

#[test]
fn primitive_examples() {
    let mut tape = Tape::new();
    let a = tape.leaf(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
    let i = tape.leaf(Matrix::identity(2));
    let p = tape.matmul(a, i).unwrap();
    assert_eq!(tape.value(p), tape.value(a));

    let v = tape.leaf(m(&[&[3.0, 4.0]]));
    let n = tape.row_l2_norm(v).unwrap();
    assert_eq!(tape.value(n).data(), &[5.0]);

    let r = tape.leaf(m(&[&[-1.0, 2.0]]));
    let out = tape.relu(r).unwrap();
    assert_eq!(tape.value(out).data(), &[0.0, 2.0]);
}

#[test]
fn primitive_errors() {
    let mut tape = Tape::new();
    let a = tape.leaf(Matrix::zeros(2, 3));
    let b = tape.leaf(Matrix::zeros(2, 3));
    assert!(matches!(tape.matmul(a, b), Err(Error::Shape { .. })));
    let col = tape.leaf(Matrix::zeros(2, 1));
    assert!(matches!(tape.add(a, col), Err(Error::Shape { .. })));
    assert!(matches!(tape.log(a), Err(Error::Domain { .. })));
    let c = tape.leaf(Matrix::zeros(2, 1));
    assert!(matches!(tape.rowwise_div(a, c), Err(Error::Domain { .. })));
    assert!(matches!(tape.apply(PrimitiveKind::Add, &[a]), Err(Error::Shape { .. })));
}

#[test]
fn masked_softmax_examples() {
    let mut tape = Tape::new();
    let s = tape.leaf(m(&[&[0.0, 0.0]]));
    let y = tape.masked_row_softmax(s, &[true, true]).unwrap();
    assert_eq!(tape.value(y).data(), &[0.5, 0.5]);

    let s = tape.leaf(m(&[&[5.0, 5.0, 5.0]]));
    let y = tape.masked_row_softmax(s, &[true, false, true]).unwrap();
    assert_eq!(tape.value(y).data(), &[0.5, 0.0, 0.5]);

    let s = tape.leaf(m(&[&[1.0, 2.0]]));
    let y = tape.masked_row_softmax(s, &[true, true]).unwrap();
    let e = 1f64.exp();
    let expected = [1.0 / (1.0 + e), e / (1.0 + e)];
    for (got, want) in tape.value(y).data().iter().zip(expected) {
        assert!((got - want).abs() < 1e-15);
    }
    assert!((expected[0] - 0.26894).abs() < 1e-5);

    let s = tape.leaf(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
    assert_eq!(
        tape.masked_row_softmax(s, &[true, true, false, false]),
        Err(Error::DegenerateNeighborhood { row: 1 })
    );
}

#[test]
fn masked_softmax_rows_sum_to_one() {
    let mut rng = seeded(11, 0);
    for _ in 0..20 {
        let scores = uniform_matrix(&mut rng, 5, 5, -30.0, 30.0);
        let mask: Vec<bool> = (0..25)
            .map(|k| k % 5 == k / 5 || crate::rng::uniform01(&mut rng) < 0.5)
            .collect();
        let mut tape = Tape::new();
        let s = tape.leaf(scores);
        let y = tape.masked_row_softmax(s, &mask).unwrap();
        for i in 0..5 {
            let row = tape.value(y).row(i);
            let total: f64 = row.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            for j in 0..5 {
                if !mask[i * 5 + j] {
                    assert_eq!(row[j], 0.0);
                }
            }
        }
    }
}

#[test]
fn backward_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(m(&[&[1.0, -2.0], &[0.5, 3.0]]));
    let loss = tape.sum_all(x).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x), &Matrix::filled(2, 2, 1.0));
    assert_eq!(tape.grad(loss).data(), &[1.0]);

    let mut tape = Tape::new();
    let xv = m(&[&[1.0, -2.0, 0.25]]);
    let x = tape.leaf(xv.clone());
    let sq = tape.hadamard(x, x).unwrap();
    let loss = tape.sum_all(sq).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x), &xv.map(|v| 2.0 * v));
}

#[test]
fn backward_matmul_matches_finite_differences() {
    let mut rng = seeded(5, 0);
    let x = uniform_matrix(&mut rng, 1, 2, -1.0, 1.0);
    let w = uniform_matrix(&mut rng, 2, 3, -1.0, 1.0);
    let err = finite_diff_check_many(
        |tape, xs| {
            let p = tape.matmul(xs[0], xs[1])?;
            tape.sum_all(p)
        },
        &[x, w],
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn backward_rejects_non_scalar() {
    let mut tape = Tape::new();
    let x = tape.leaf(Matrix::zeros(2, 1));
    assert!(matches!(tape.backward(x), Err(Error::Shape { .. })));
}

#[test]
fn repeated_backward_accumulates() {
    let mut tape = Tape::new();
    let x = tape.leaf(m(&[&[2.0]]));
    let y = tape.hadamard(x, x).unwrap();
    let loss = tape.sum_all(y).unwrap();
    tape.backward(loss).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).data(), &[8.0]);
    tape.zero_grad();
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).data(), &[4.0]);
}

#[test]
fn backward_is_linear() {
    let mut rng = seeded(9, 0);
    let xv = uniform_matrix(&mut rng, 3, 2, -1.0, 1.0);
    let build = |tape: &mut Tape, x: Tensor| -> (Tensor, Tensor) {
        let s = tape.sigmoid(x).unwrap();
        let l1 = tape.sum_all(s).unwrap();
        let sq = tape.hadamard(x, x).unwrap();
        let l2 = tape.sum_all(sq).unwrap();
        (l1, l2)
    };
    let mut separate = Tape::new();
    let x = separate.leaf(xv.clone());
    let (l1, l2) = build(&mut separate, x);
    separate.backward(l1).unwrap();
    separate.backward(l2).unwrap();

    let mut joint = Tape::new();
    let xj = joint.leaf(xv);
    let (l1, l2) = build(&mut joint, xj);
    let total = joint.add(l1, l2).unwrap();
    joint.backward(total).unwrap();
    assert!(separate.grad(x).max_abs_diff(joint.grad(xj)) < 1e-14);
}

#[test]
fn fan_out_accumulates() {
    let mut tape = Tape::new();
    let x = tape.leaf(m(&[&[3.0]]));
    let a = tape.scale(x, 2.0).unwrap();
    let b = tape.scale(x, 5.0).unwrap();
    let s = tape.add(a, b).unwrap();
    let loss = tape.sum_all(s).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).data(), &[7.0]);
}

#[test]
fn relu_derivative_at_zero_is_zero() {
    let mut tape = Tape::new();
    let x = tape.leaf(m(&[&[0.0, 1.0, -1.0]]));
    let r = tape.relu(x).unwrap();
    let loss = tape.sum_all(r).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).data(), &[0.0, 1.0, 0.0]);
}

#[test]
fn zero_row_norm_has_zero_gradient() {
    let mut tape = Tape::new();
    let x = tape.leaf(m(&[&[0.0, 0.0], &[3.0, 4.0]]));
    let n = tape.row_l2_norm(x).unwrap();
    let loss = tape.sum_all(n).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).data(), &[0.0, 0.0, 0.6, 0.8]);
}

#[test]
fn replay_reproduces_values_bitwise() {
    let mut rng = seeded(2, 0);
    let mut tape = Tape::new();
    let x = tape.leaf(uniform_matrix(&mut rng, 4, 3, -1.0, 1.0));
    let w = tape.leaf(uniform_matrix(&mut rng, 3, 4, -1.0, 1.0));
    let p = tape.matmul(x, w).unwrap();
    let mask: Vec<bool> = (0..16).map(|k| k % 3 != 1).collect();
    let a = tape.masked_row_softmax(p, &mask).unwrap();
    let n = tape.row_l2_norm(a).unwrap();
    let d = tape.rowwise_div(x, n).unwrap();
    let _ = tape.sum_all(d).unwrap();
    let replayed = tape.replay().unwrap();
    for (orig, again) in tape.values().zip(&replayed) {
        assert_eq!(
            orig.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            again.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn identical_programs_are_bitwise_deterministic() {
    let run = || {
        let mut rng = seeded(4, 0);
        let mut tape = Tape::new();
        let x = tape.leaf(uniform_matrix(&mut rng, 3, 3, -2.0, 2.0));
        let s = tape.sigmoid(x).unwrap();
        let e = tape.exp(s).unwrap();
        let p = tape.matmul(e, x).unwrap();
        let loss = tape.sum_all(p).unwrap();
        tape.backward(loss).unwrap();
        (tape.value(loss).clone(), tape.grad(x).clone())
    };
    let (v1, g1) = run();
    let (v2, g2) = run();
    assert_eq!(v1.data()[0].to_bits(), v2.data()[0].to_bits());
    assert!(g1.data().iter().zip(g2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn finite_diff_check_examples() {
    let mut rng = seeded(21, 0);
    let x = uniform_matrix(&mut rng, 3, 4, -3.0, 3.0);
    let err = finite_diff_check(|t, x| t.sum_all(x), &x, 1e-5).unwrap();
    assert!(err < 1e-8, "{err}");

    // Keep every entry well away from the relu kink.
    let away = x.map(|v| if v.abs() < 0.1 { v + 0.5 } else { v });
    let err = finite_diff_check(
        |t, x| {
            let r = t.relu(x)?;
            t.sum_all(r)
        },
        &away,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");

    let xs = uniform_matrix(&mut rng, 3, 4, -2.0, 2.0);
    let err = finite_diff_check(
        |t, x| {
            let s = t.sigmoid(x)?;
            t.sum_all(s)
        },
        &xs,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}
