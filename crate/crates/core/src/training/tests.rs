use super::*;
use crate::autodiff::finite_diff_check_many;
use crate::graph::{two_clique_toy, Split};
use crate::layers::{LayerKind, ModelConfig, Nonlinearity};
use crate::randalign::AlignMode;
use crate::rng::{seeded, uniform_matrix};
use crate::layers::{Model, ModelParams, PreparedGraph};
use crate::randalign::AlignConfig;

fn loss_value(logits: Matrix, labels: &[usize], w: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let x = tape.leaf(logits);
    let l = cross_entropy_loss(&mut tape, x, labels, w).unwrap();
    tape.value(l)[(0, 0)]
}

#[test]
fn cross_entropy_examples() {
    let l = loss_value(Matrix::zeros(1, 2), &[0], &[1.0, 1.0]);
    assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    let gap = loss_value(Matrix::new(1, 2, vec![40.0, 0.0]).unwrap(), &[0], &[1.0, 1.0]);
    assert!(gap < 1e-16);
    assert!(loss_value(Matrix::new(1, 2, vec![1e5, -1e5]).unwrap(), &[1], &[1.0, 1.0]).is_finite());

    let mut rng = seeded(2, 0);
    let logits = uniform_matrix(&mut rng, 6, 4, -3.0, 3.0);
    let labels = [0, 3, 1, 1, 2, 0];
    let w = [0.5, 2.0, 1.0, 1.5];
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let z: f64 = logits.row(i).iter().map(|x| x.exp()).sum();
        num += w[y] * -(logits[(i, y)].exp() / z).ln();
        den += w[y];
    }
    assert!((loss_value(logits.clone(), &labels, &w) - num / den).abs() < 1e-12);

    let mut tape = Tape::new();
    let x = tape.leaf(logits);
    assert!(matches!(cross_entropy_loss(&mut tape, x, &[0, 4, 1, 1, 2, 0], &w), Err(Error::Validation(_))));
    assert!(cross_entropy_loss(&mut tape, x, &labels, &[1.0, 0.0, 1.0, 1.0]).is_err());
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let mut rng = seeded(seed, 1);
        let logits = uniform_matrix(&mut rng, 5, 3, -2.0, 2.0);
        let labels: Vec<usize> = (0..5).map(|i| (i + seed as usize) % 3).collect();
        let err = finite_diff_check_many(
            |tape, xs| cross_entropy_loss(tape, xs[0], &labels, &[1.0, 0.7, 1.6]),
            &[logits],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn class_weight_normalization() {
    let w = class_weights(&[0, 0, 0, 1], 3);
    // Inverse counts 1/3 and 1, mean 2/3 over present classes.
    assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 1.5).abs() < 1e-15);
    assert_eq!(w[2], 1.0);
    assert_eq!(class_weights(&[1, 0, 1, 0], 2), vec![1.0, 1.0]);
}

#[test]
fn adam_examples() {
    let mut p = Matrix::new(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
    let before = p.clone();
    let mut st = AdamState::new(1e-3, &[(2, 2)]);
    adam_step(&mut [&mut p], &[Matrix::zeros(2, 2)], &mut st).unwrap();
    assert_eq!(p, before);
    assert_eq!(st.t, 1);

    let mut x = Matrix::zeros(1, 1);
    let mut st = AdamState::new(1e-3, &[(1, 1)]);
    adam_step(&mut [&mut x], &[Matrix::filled(1, 1, 1.0)], &mut st).unwrap();
    assert!((x[(0, 0)] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-18);

    // Scalar trace with constant gradient 0.3 for two steps.
    let (lr, g, b1, b2, eps) = (0.01f64, 0.3f64, 0.9f64, 0.999f64, 1e-8f64);
    let (mut m, mut v, mut theta) = (0.0f64, 0.0f64, 2.0f64);
    for t in 1..=2 {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        theta -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
    }
    let mut x = Matrix::filled(1, 1, 2.0);
    let mut st = AdamState::new(lr, &[(1, 1)]);
    for _ in 0..2 {
        adam_step(&mut [&mut x], &[Matrix::filled(1, 1, g)], &mut st).unwrap();
    }
    assert_eq!(x[(0, 0)], theta);
    assert!(adam_step(&mut [&mut x], &[Matrix::zeros(2, 1)], &mut st).is_err());
}

#[test]
fn plateau_examples() {
    let mut s = PlateauSchedule::new(1e-3, 10);
    for e in 0..200 {
        assert_eq!(plateau_update(&mut s, 10.0 - e as f64 * 0.01), (1e-3, false));
    }

    let mut s = PlateauSchedule::new(1e-3, 10);
    let mut first = None;
    for epoch in 1..=30 {
        let (lr, _) = plateau_update(&mut s, 1.0);
        if lr < 1e-3 && first.is_none() {
            first = Some(epoch);
        }
    }
    assert_eq!(first, Some(11));

    let mut s = PlateauSchedule::new(1.5e-6, 1);
    assert_eq!(plateau_update(&mut s, 1.0), (1.5e-6, false));
    assert_eq!(plateau_update(&mut s, 1.0), (7.5e-7, true));

    // A decrease within the tolerance is not an improvement.
    let mut s = PlateauSchedule::new(1e-3, 1);
    plateau_update(&mut s, 1.0);
    assert_eq!(plateau_update(&mut s, 1.0 - 5e-7).0, 5e-4);
}

#[test]
fn balanced_accuracy_examples() {
    assert_eq!(balanced_accuracy(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap(), 1.0);
    assert_eq!(balanced_accuracy(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap(), 0.5);
    assert_eq!(balanced_accuracy(&[0, 0, 1], &[0, 1, 1], 2).unwrap(), 0.75);
    // Class 2 is absent and does not enter the mean.
    assert_eq!(balanced_accuracy(&[0, 2], &[0, 1], 3).unwrap(), 0.5);
    assert!(balanced_accuracy(&[], &[], 2).is_err());
    assert!(balanced_accuracy(&[0], &[0, 1], 2).is_err());
}

fn toy_cfg(kind: LayerKind, depth: usize, randalign: bool) -> ModelConfig {
    ModelConfig {
        layer_kind: kind,
        depth,
        d_in: 2,
        d_h: 8,
        n_classes: 2,
        use_randalign: randalign,
        align_scaling: true,
        use_standardization: false,
        nonlinearity: Nonlinearity::Relu,
    }
}

#[test]
fn zero_learning_rate_keeps_initial_model() {
    let data = two_clique_toy(4, 3, 2).unwrap();
    let cfg = toy_cfg(LayerKind::Gcn, 2, true);
    let tc = TrainConfig {
        lr: 0.0,
        max_epochs: 1,
        ..TrainConfig::default()
    };
    let rec = train_run(&cfg, &data, &tc, 5).unwrap();
    let init = Model::new(cfg, 5).unwrap();
    assert_eq!(rec.params, init.params);
    assert_eq!(rec.epochs.len(), 1);
    assert_eq!(rec.epochs[0].train_acc, evaluate(&init, &data, Split::Train).unwrap());
    assert_eq!(rec.epochs[0].test_acc, evaluate(&init, &data, Split::Test).unwrap());
}

#[test]
fn separable_toy_is_learned() {
    let data = two_clique_toy(5, 4, 4).unwrap();
    let tc = TrainConfig {
        lr: 1e-2,
        max_epochs: 200,
        ..TrainConfig::default()
    };
    let rec = train_run(&toy_cfg(LayerKind::Gcn, 2, false), &data, &tc, 0).unwrap();
    assert!(rec.epochs.iter().any(|e| e.test_acc >= 0.95));
    assert!(rec.epochs.len() <= 200);
}

#[test]
fn runs_are_deterministic_and_report_eval_metrics() {
    let data = two_clique_toy(4, 3, 2).unwrap();
    let tc = TrainConfig {
        max_epochs: 5,
        batch_size: 2,
        ..TrainConfig::default()
    };
    for kind in [LayerKind::Gcn, LayerKind::Gat, LayerKind::GatedGcn] {
        let cfg = toy_cfg(kind, 3, true);
        let a = train_run(&cfg, &data, &tc, 11).unwrap();
        let b = train_run(&cfg, &data, &tc, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.metric_modes.iter().all(|m| *m == AlignMode::Eval));
        // Two splits per epoch plus the final smoothness pass.
        assert_eq!(a.metric_modes.len(), 5 * (3 + 2) + 2);
        let s = a.smoothness.unwrap();
        assert_eq!(s.cosine.len(), 4);
        assert!(s.cosine.iter().all(|c| c.is_nan() || (-1.0..=1.0).contains(c)));
        let c = train_run(&cfg, &data, &tc, 12).unwrap();
        assert_ne!(a.params, c.params);
    }
}

#[test]
fn loss_decreases_on_separable_toy() {
    let data = two_clique_toy(5, 4, 2).unwrap();
    let tc = TrainConfig {
        max_epochs: 50,
        ..TrainConfig::default()
    };
    for seed in 0..5 {
        let rec = train_run(&toy_cfg(LayerKind::Gcn, 2, true), &data, &tc, seed).unwrap();
        assert_eq!(rec.epochs.len(), 50);
        assert!(rec.epochs[49].train_loss < rec.epochs[0].train_loss, "seed {seed}");
    }
}

#[test]
fn divergence_is_recorded() {
    let data = two_clique_toy(4, 2, 2).unwrap();
    let tc = TrainConfig {
        lr: f64::INFINITY,
        max_epochs: 5,
        ..TrainConfig::default()
    };
    let rec = train_run(&toy_cfg(LayerKind::Gcn, 2, false), &data, &tc, 0).unwrap();
    assert!(rec.status.diverged());
    assert!(rec.smoothness.is_none());
}

#[test]
fn every_parameter_receives_gradient() {
    // Clean toy features make every neighbourhood uniform, which zeroes the
    // attention gradients; a noisy two-block sample breaks that symmetry.
    let g = crate::graph::sbm_generate(&[4, 4], 1.0, 0.2, 2, 0.3, &mut seeded(1, 0)).unwrap();
    for kind in [LayerKind::Gcn, LayerKind::Gat, LayerKind::GatedGcn] {
        for randalign in [false, true] {
            let mut cfg = toy_cfg(kind, 3, randalign);
            cfg.use_standardization = true;
            let prepared = PreparedGraph::new(g.graph.clone(), kind);
            let g_labels = &g.labels;
            let mut seen = vec![0.0f64; Model::new(cfg.clone(), 0).unwrap().params.named().len()];
            for seed in 0..3 {
                let model = Model::new(cfg.clone(), seed).unwrap();
                let mut tape = Tape::new();
                let bound = model.params.bind(&mut tape);
                let mut align = AlignConfig::new(AlignMode::Train, true, seeded(seed, 1));
                let pass = model.forward(&mut tape, &bound, &prepared, &g.features, &mut align).unwrap();
                let loss = cross_entropy_loss(&mut tape, pass.logits, g_labels, &[1.0, 1.0]).unwrap();
                tape.backward(loss).unwrap();
                for (i, gr) in ModelParams::grads(&tape, &bound).iter().enumerate() {
                    seen[i] = gr.data().iter().fold(seen[i], |m, x| m.max(x.abs()));
                }
            }
            let model = Model::new(cfg, 0).unwrap();
            let names = model.params.named();
            for ((name, _), ok) in names.iter().zip(&seen) {
                // The source-side attention score cancels in every softmax row.
                if name.ends_with("a_src") {
                    assert!(*ok < 1e-10, "{kind:?} randalign={randalign} {name}: {ok}");
                } else {
                    assert!(*ok > 0.0, "{kind:?} randalign={randalign} {name}");
                }
            }
        }
    }
}
