use super::Graph;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// A graph with per-node labels and input features.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledGraph {
    pub graph: Graph,
    pub labels: Vec<usize>,
    pub features: Matrix,
    pub split: Split,
}

impl LabeledGraph {
    pub fn new(graph: Graph, labels: Vec<usize>, features: Matrix, split: Split) -> Result<Self> {
        if labels.len() != graph.n() || features.rows() != graph.n() {
            return Err(Error::validation(format!(
                "graph has {} nodes but {} labels and {} feature rows",
                graph.n(),
                labels.len(),
                features.rows()
            )));
        }
        Ok(Self {
            graph,
            labels,
            features,
            split,
        })
    }
}

/// Node-classification dataset: several graphs sharing one label space.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledGraphSet {
    graphs: Vec<LabeledGraph>,
    n_classes: usize,
}

impl LabeledGraphSet {
    pub fn new(graphs: Vec<LabeledGraph>, n_classes: usize) -> Result<Self> {
        let d_in = graphs.first().map(|g| g.features.cols());
        for (i, g) in graphs.iter().enumerate() {
            if let Some(&bad) = g.labels.iter().find(|&&l| l >= n_classes) {
                return Err(Error::validation(format!(
                    "graph {i}: label {bad} >= {n_classes} classes"
                )));
            }
            if Some(g.features.cols()) != d_in {
                return Err(Error::validation(format!("graph {i}: feature width differs")));
            }
        }
        Ok(Self { graphs, n_classes })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn d_in(&self) -> usize {
        self.graphs.first().map_or(0, |g| g.features.cols())
    }

    pub fn graphs(&self) -> &[LabeledGraph] {
        &self.graphs
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledGraph> {
        self.graphs.iter().filter(move |g| g.split == split)
    }
}

/// Parameters of a synthetic SBM node-classification dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SbmDatasetSpec {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub d_in: usize,
    pub noise: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}
