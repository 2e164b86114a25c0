//! Seeded graph generators and small named fixtures.
//!
//! Every generator consumes its ChaCha8 stream in a fixed order so outputs
//! are reproducible across platforms.

use super::{Graph, LabeledGraph, LabeledGraphSet, SbmDatasetSpec, Split};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{below, seeded, uniform01};
use rand_core::RngCore;

/// Output of [`sbm_generate`].
#[derive(Clone, Debug, PartialEq)]
pub struct SbmSample {
    pub graph: Graph,
    pub labels: Vec<usize>,
    pub features: Matrix,
}

/// Stochastic block model with one-hot block features.
///
/// Stream order: first one draw per node pair `(u, v)`, `u < v`, in
/// lexicographic order (edge iff draw `< p`); then, per node in ascending
/// order, one corruption draw and one replacement index draw. A node whose
/// corruption draw is `< noise` has its one-hot indicator moved to the
/// uniformly drawn index (which may coincide with its own block).
pub fn sbm_generate<R: RngCore + ?Sized>(
    block_sizes: &[usize],
    p_in: f64,
    p_out: f64,
    d_in: usize,
    noise: f64,
    rng: &mut R,
) -> Result<SbmSample> {
    if block_sizes.is_empty() {
        return Err(Error::validation("block_sizes must be non-empty"));
    }
    for (name, p) in [("p_in", p_in), ("p_out", p_out), ("noise", noise)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::validation(format!("{name}={p} outside [0,1]")));
        }
    }
    if d_in < block_sizes.len() {
        return Err(Error::validation(format!(
            "d_in={d_in} cannot one-hot encode {} blocks",
            block_sizes.len()
        )));
    }
    let labels: Vec<usize> = block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let n = labels.len();

    let mut pairs = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if uniform01(rng) < p {
                pairs.push((u, v));
            }
        }
    }
    let graph = Graph::from_edge_list(n, &pairs)?;

    let mut features = Matrix::zeros(n, d_in);
    for (u, &label) in labels.iter().enumerate() {
        let corrupt = uniform01(rng) < noise;
        let replacement = below(rng, d_in as u64) as usize;
        let hot = if corrupt { replacement } else { label };
        features[(u, hot)] = 1.0;
    }
    Ok(SbmSample {
        graph,
        labels,
        features,
    })
}

/// The two-node, single-edge graph.
pub fn two_node_fixture() -> Graph {
    Graph::from_edge_list(2, &[(0, 1)]).expect("valid fixture")
}

pub fn path_graph(n: usize) -> Graph {
    let pairs: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
    Graph::from_edge_list(n, &pairs).expect("valid path")
}

/// Connected graph: a random recursive tree (node `v` attaches to a uniform
/// earlier node) plus every other pair independently with probability
/// `extra_p`.
pub fn random_connected_graph(n: usize, extra_p: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&extra_p) {
        return Err(Error::validation(format!("extra_p={extra_p} outside [0,1]")));
    }
    let mut rng = seeded(seed, 0);
    let mut pairs = Vec::new();
    for v in 1..n {
        pairs.push((below(&mut rng, v as u64) as usize, v));
    }
    for u in 0..n {
        for v in u + 1..n {
            if uniform01(&mut rng) < extra_p {
                pairs.push((u, v));
            }
        }
    }
    Graph::from_edge_list(n, &pairs)
}

/// Linearly separable toy: each graph is two disjoint cliques of
/// `clique_size` nodes with clean one-hot features.
pub fn two_clique_toy(clique_size: usize, n_train: usize, n_test: usize) -> Result<LabeledGraphSet> {
    SbmDatasetSpec {
        block_sizes: vec![clique_size, clique_size],
        p_in: 1.0,
        p_out: 0.0,
        d_in: 2,
        noise: 0.0,
        n_train,
        n_test,
        seed: 0,
    }
    .generate()
}

impl SbmDatasetSpec {
    /// Graph `i` (train graphs first, then test) is drawn from
    /// `ChaCha8(seed)` on stream `i`.
    pub fn generate(&self) -> Result<LabeledGraphSet> {
        let n_classes = self.block_sizes.len();
        let mut graphs = Vec::with_capacity(self.n_train + self.n_test);
        for i in 0..self.n_train + self.n_test {
            let mut rng = seeded(self.seed, i as u64);
            let sample = sbm_generate(
                &self.block_sizes,
                self.p_in,
                self.p_out,
                self.d_in,
                self.noise,
                &mut rng,
            )?;
            let split = if i < self.n_train {
                Split::Train
            } else {
                Split::Test
            };
            graphs.push(LabeledGraph::new(
                sample.graph,
                sample.labels,
                sample.features,
                split,
            )?);
        }
        LabeledGraphSet::new(graphs, n_classes)
    }
}
