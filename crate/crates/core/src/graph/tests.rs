use super::*;
use crate::rng::seeded;
use proptest::prelude::*;

fn assert_invariants(g: &Graph) {
    let degrees = g.degrees();
    assert_eq!(degrees.iter().sum::<usize>(), 2 * g.edges().len());
    for u in 0..g.n() {
        assert_eq!(degrees[u], g.neighbors(u).len());
        assert!(!g.neighbors(u).contains(&u));
        assert!(g.neighbors(u).windows(2).all(|w| w[0] < w[1]));
        for &v in g.neighbors(u) {
            assert!(g.neighbors(v).contains(&u));
        }
    }
}

#[test]
fn edge_list_examples() {
    let g = Graph::from_edge_list(2, &[(0, 1)]).unwrap();
    assert_eq!(g.degrees(), vec![1, 1]);
    let g = Graph::from_edge_list(3, &[(0, 1), (1, 0)]).unwrap();
    assert_eq!(g.edges(), &[(0, 1)]);
    assert!(matches!(
        Graph::from_edge_list(4, &[(0, 4)]),
        Err(Error::Validation(_))
    ));
    assert!(matches!(
        Graph::from_edge_list(4, &[(2, 2)]),
        Err(Error::Validation(_))
    ));
}

#[test]
fn two_node_fixture_shape() {
    let g = two_node_fixture();
    assert_eq!(g.n(), 2);
    assert_eq!(g.edges(), &[(0, 1)]);
    assert_eq!(g.degrees(), vec![1, 1]);
    assert_eq!(g.neighbor_lists(), vec![vec![1], vec![0]]);
}

#[test]
fn normalized_operator_examples() {
    let ops = two_node_fixture().normalized_operators();
    assert_eq!(
        ops.laplacian,
        Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap()
    );
    // Self-loop degrees are 2, so every entry is 1/sqrt(2*2).
    assert!(ops.a_renorm.max_abs_diff(&Matrix::filled(2, 2, 0.5)) < 1e-15);
    assert!(ops
        .a_sym
        .max_abs_diff(&Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap())
        < 1e-15);

    let empty = Graph::from_edge_list(3, &[]).unwrap();
    assert_eq!(empty.normalized_operators().a_renorm, Matrix::identity(3));
}

#[test]
fn normalized_operators_are_symmetric() {
    let g = random_connected_graph(9, 0.3, 4).unwrap();
    let iso = Graph::from_edge_list(4, &[(0, 1), (1, 2)]).unwrap();
    for g in [g, iso] {
        let ops = g.normalized_operators();
        for m in [&ops.a_sym, &ops.a_renorm, &ops.laplacian] {
            assert_eq!(m, &m.transpose());
        }
        if g.n() == 4 {
            assert_eq!(ops.a_renorm.row(3), &[0.0, 0.0, 0.0, 1.0]);
        }
    }
}

#[test]
fn sbm_deterministic_extremes() {
    let s = sbm_generate(&[3, 3], 1.0, 0.0, 2, 0.0, &mut seeded(1, 0)).unwrap();
    assert_eq!(
        s.graph.edges(),
        &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]
    );
    assert_eq!(s.labels, vec![0, 0, 0, 1, 1, 1]);
    for u in 0..6 {
        let expected: Vec<f64> = (0..2).map(|j| f64::from(j == s.labels[u])).collect();
        assert_eq!(s.features.row(u), expected.as_slice());
    }

    let k4 = sbm_generate(&[2, 2], 1.0, 1.0, 2, 0.7, &mut seeded(1, 0)).unwrap();
    assert_eq!(k4.graph.edges().len(), 6);
}

#[test]
fn sbm_intra_block_edge_count_within_four_sigma() {
    let s = sbm_generate(&[20, 20, 20], 0.5, 0.05, 3, 0.3, &mut seeded(7, 0)).unwrap();
    let intra = s
        .graph
        .edges()
        .iter()
        .filter(|(u, v)| s.labels[*u] == s.labels[*v])
        .count() as f64;
    // Binomial(3 * C(20,2), 0.5).
    let trials = 3.0 * (20.0 * 19.0 / 2.0);
    let mean = trials * 0.5;
    let sigma = (trials * 0.25_f64).sqrt();
    assert_eq!(mean, 285.0);
    assert!((intra - mean).abs() <= 4.0 * sigma, "intra={intra}");
    assert_invariants(&s.graph);
}

#[test]
fn sbm_rejects_bad_probability() {
    for (p_in, p_out, noise) in [(1.2, 0.0, 0.0), (0.5, -0.1, 0.0), (0.5, 0.1, 2.0)] {
        assert!(matches!(
            sbm_generate(&[2, 2], p_in, p_out, 2, noise, &mut seeded(0, 0)),
            Err(Error::Validation(_))
        ));
    }
    assert!(sbm_generate(&[], 0.5, 0.1, 2, 0.0, &mut seeded(0, 0)).is_err());
}

#[test]
fn sbm_reproducible() {
    let a = sbm_generate(&[5, 5], 0.6, 0.1, 3, 0.4, &mut seeded(3, 2)).unwrap();
    let b = sbm_generate(&[5, 5], 0.6, 0.1, 3, 0.4, &mut seeded(3, 2)).unwrap();
    assert_eq!(a, b);
}

/// Row `u` of `P^k` by explicit dense matrix powers.
fn matrix_power_row(g: &Graph, u: usize, k: usize) -> Vec<f64> {
    let p = g.lazy_walk_matrix();
    let mut acc = Matrix::identity(g.n());
    for _ in 0..k {
        acc = acc.matmul(&p).unwrap();
    }
    acc.row(u).to_vec()
}

#[test]
fn lazy_walk_examples() {
    let g = path_graph(3);
    assert_eq!(lazy_walk_distribution(&g, 1, 0).unwrap(), vec![0.0, 1.0, 0.0]);
    assert_eq!(
        lazy_walk_distribution(&two_node_fixture(), 0, 1).unwrap(),
        vec![0.5, 0.5]
    );
    let walk = lazy_walk_distribution(&g, 0, 2).unwrap();
    let oracle = matrix_power_row(&g, 0, 2);
    for (a, b) in walk.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-15);
    }
    // P^2 row 0 = [1/2*1/2 + 1/2*1/3, 1/2*1/2 + 1/2*1/3, 1/2*1/3].
    assert!((walk[0] - 5.0 / 12.0).abs() < 1e-15);
    assert!((walk[2] - 1.0 / 6.0).abs() < 1e-15);
    assert!(lazy_walk_distribution(&g, 3, 1).is_err());
}

#[test]
fn lazy_walk_sums_to_one_and_converges() {
    for seed in 0..5 {
        let g = random_connected_graph(12, 0.2, seed).unwrap();
        assert!(g.is_connected());
        for k in [1, 5, 17] {
            let p = lazy_walk_distribution(&g, 0, k).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let oracle = matrix_power_row(&g, 0, k);
            assert!(p.iter().zip(&oracle).all(|(a, b)| (a - b).abs() < 1e-12));
        }
        let p64 = lazy_walk_distribution(&g, 3, 64).unwrap();
        let p65 = lazy_walk_distribution(&g, 3, 65).unwrap();
        let linf = p64
            .iter()
            .zip(&p65)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(linf < 1e-6, "{linf}");
    }
}

#[test]
fn permuted_graph_relabels_edges() {
    let g = path_graph(3);
    let p = g.permuted(&[2, 0, 1]).unwrap();
    // new 0 = old 2, new 1 = old 0, new 2 = old 1.
    assert_eq!(p.edges(), &[(0, 2), (1, 2)]);
    assert!(g.permuted(&[0, 0, 1]).is_err());
}

#[test]
fn edge_list_format_examples() {
    let g = path_graph(3);
    let text = write_edge_list(&g);
    assert_eq!(text, "3 2\n0 1\n1 2\n");
    assert_eq!(parse_edge_list(&text).unwrap(), g);
    assert!(matches!(parse_edge_list("3 2\n0 1\n"), Err(Error::Parse { .. })));
    assert!(matches!(parse_edge_list("3 1\n0 x\n"), Err(Error::Parse { .. })));
    assert!(matches!(parse_edge_list("2 1\n0 5\n"), Err(Error::Validation(_))));
    assert_eq!(parse_labels("1\n0\n2\n").unwrap(), vec![1, 0, 2]);
    let x = Matrix::from_rows(&[vec![1.0, 0.5], vec![-2.0, 0.0]]).unwrap();
    assert_eq!(write_features(&x), "f0,f1\n1,0.5\n-2,0\n");
    assert_eq!(parse_features(&write_features(&x)).unwrap(), x);
}

#[test]
fn dataset_generation_is_split_and_reproducible() {
    let spec = SbmDatasetSpec {
        block_sizes: vec![4, 4, 4],
        p_in: 0.5,
        p_out: 0.05,
        d_in: 3,
        noise: 0.3,
        n_train: 3,
        n_test: 2,
        seed: 11,
    };
    let a = spec.generate().unwrap();
    assert_eq!(a, spec.generate().unwrap());
    assert_eq!(a.split(Split::Train).count(), 3);
    assert_eq!(a.split(Split::Test).count(), 2);
    assert_eq!(a.n_classes(), 3);
    assert_ne!(a.graphs()[0].graph, a.graphs()[1].graph);
}

proptest! {
    #[test]
    fn constructor_invariants(n in 1usize..12, raw in proptest::collection::vec((0usize..12, 0usize..12), 0..40)) {
        let pairs: Vec<_> = raw.into_iter()
            .map(|(u, v)| (u % n, v % n))
            .filter(|(u, v)| u != v)
            .collect();
        let g = Graph::from_edge_list(n, &pairs).unwrap();
        assert_invariants(&g);
        prop_assert_eq!(parse_edge_list(&write_edge_list(&g)).unwrap(), g);
    }
}
