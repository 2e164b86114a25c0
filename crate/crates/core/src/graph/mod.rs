//! Undirected simple graphs and the operators built from them.

mod dataset;
mod generators;
mod io;

pub use dataset::{LabeledGraph, LabeledGraphSet, SbmDatasetSpec, Split};
pub use generators::{
    path_graph, random_connected_graph, sbm_generate, two_clique_toy, two_node_fixture, SbmSample,
};
pub use io::{
    parse_edge_list, parse_features, parse_labels, write_edge_list, write_features, write_labels,
};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Undirected graph without self-loops, stored as sorted neighbor lists in
/// compressed (offset + target) form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Graph {
    /// Builds a graph from unordered pairs. Duplicates and reversed copies
    /// collapse to one edge.
    pub fn from_edge_list(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut edges = Vec::with_capacity(pairs.len());
        for &(u, v) in pairs {
            if u >= n || v >= n {
                return Err(Error::validation(format!(
                    "edge ({u},{v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::validation(format!("self-loop at node {u}")));
            }
            edges.push((u.min(v), u.max(v)));
        }
        edges.sort_unstable();
        edges.dedup();

        let mut degrees = vec![0usize; n];
        for &(u, v) in &edges {
            degrees[u] += 1;
            degrees[v] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degrees {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut targets = vec![0usize; 2 * edges.len()];
        for &(u, v) in &edges {
            targets[fill[u]] = v;
            fill[u] += 1;
            targets[fill[v]] = u;
            fill[v] += 1;
        }
        for u in 0..n {
            targets[offsets[u]..offsets[u + 1]].sort_unstable();
        }
        Ok(Self {
            n,
            edges,
            offsets,
            targets,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|u| self.degree(u)).collect()
    }

    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        (0..self.n).map(|u| self.neighbors(u).to_vec()).collect()
    }

    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.n, self.n);
        for &(u, v) in &self.edges {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        a
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }

    /// Relabels nodes so that new node `i` is old node `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n {
            return Err(Error::validation("permutation length differs from n"));
        }
        let mut inverse = vec![usize::MAX; self.n];
        for (new, &old) in order.iter().enumerate() {
            if old >= self.n || inverse[old] != usize::MAX {
                return Err(Error::validation("not a permutation"));
            }
            inverse[old] = new;
        }
        let pairs: Vec<_> = self
            .edges
            .iter()
            .map(|&(u, v)| (inverse[u], inverse[v]))
            .collect();
        Graph::from_edge_list(self.n, &pairs)
    }

    /// Self-loop mask `A + I` as row-major booleans.
    pub fn self_loop_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n * self.n];
        for u in 0..self.n {
            mask[u * self.n + u] = true;
            for &v in self.neighbors(u) {
                mask[u * self.n + v] = true;
            }
        }
        mask
    }

    /// Row-stochastic lazy walk matrix `P[w,x] = 1/(deg(w)+1)` for
    /// `x in N(w) ∪ {w}`. Also the self-loop mean aggregation operator.
    pub fn lazy_walk_matrix(&self) -> Matrix {
        let mut p = Matrix::zeros(self.n, self.n);
        for w in 0..self.n {
            let share = 1.0 / (self.degree(w) + 1) as f64;
            p[(w, w)] = share;
            for &x in self.neighbors(w) {
                p[(w, x)] = share;
            }
        }
        p
    }

    pub fn normalized_operators(&self) -> NormalizedOperators {
        normalized_operators(self)
    }
}

/// Matrix operators derived from a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedOperators {
    /// Symmetric normalized Laplacian `I - D^{-1/2} A D^{-1/2}`.
    pub a_sym: Matrix,
    /// GCN propagation matrix `D~^{-1/2} (A + I) D~^{-1/2}`, `D~` the degree
    /// matrix of `A + I`.
    pub a_renorm: Matrix,
    /// Combinatorial Laplacian `D - A`.
    pub laplacian: Matrix,
}

pub fn normalized_operators(g: &Graph) -> NormalizedOperators {
    let n = g.n();
    let deg: Vec<f64> = g.degrees().into_iter().map(|d| d as f64).collect();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let inv_sqrt_tilde: Vec<f64> = deg.iter().map(|&d| 1.0 / (d + 1.0).sqrt()).collect();

    let mut a_sym = Matrix::identity(n);
    let mut a_renorm = Matrix::zeros(n, n);
    let mut laplacian = Matrix::zeros(n, n);
    for u in 0..n {
        laplacian[(u, u)] = deg[u];
        a_renorm[(u, u)] = inv_sqrt_tilde[u] * inv_sqrt_tilde[u];
        for &v in g.neighbors(u) {
            laplacian[(u, v)] = -1.0;
            a_sym[(u, v)] = -inv_sqrt[u] * inv_sqrt[v];
            a_renorm[(u, v)] = inv_sqrt_tilde[u] * inv_sqrt_tilde[v];
        }
    }
    NormalizedOperators {
        a_sym,
        a_renorm,
        laplacian,
    }
}

/// Exact distribution of a `k`-step lazy random walk started at `u`: each
/// step moves uniformly over `N(w) ∪ {w}`.
pub fn lazy_walk_distribution(g: &Graph, u: usize, k: usize) -> Result<Vec<f64>> {
    if u >= g.n() {
        return Err(Error::validation(format!("start node {u} out of range")));
    }
    let mut p = vec![0.0; g.n()];
    p[u] = 1.0;
    for _ in 0..k {
        let mut next = vec![0.0; g.n()];
        for (w, &mass) in p.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let share = mass / (g.degree(w) + 1) as f64;
            next[w] += share;
            for &x in g.neighbors(w) {
                next[x] += share;
            }
        }
        p = next;
    }
    Ok(p)
}

#[cfg(test)]
mod tests;
