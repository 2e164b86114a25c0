use super::{
    encode, gat_forward, gatedgcn_forward, gcn_forward, readout_node, standardize, BoundParams,
    GraphTensors, LayerKind, ModelConfig, ModelParams, Nonlinearity,
};
use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::randalign::{randalign_update, AlignConfig, AlignMode};
use crate::rng::{seeded, streams};
use rand_core::RngCore;

/// A graph with the dense operators its layer kind needs, built once.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    graph: Graph,
    a_renorm: Option<Matrix>,
    mask: Vec<bool>,
    edge_recv: Option<Matrix>,
    edge_send: Option<Matrix>,
}

impl PreparedGraph {
    pub fn new(graph: Graph, kind: LayerKind) -> Self {
        let mut p = Self {
            graph,
            a_renorm: None,
            mask: Vec::new(),
            edge_recv: None,
            edge_send: None,
        };
        match kind {
            LayerKind::Gcn => p.a_renorm = Some(p.graph.normalized_operators().a_renorm),
            LayerKind::Gat => p.mask = p.graph.self_loop_mask(),
            LayerKind::GatedGcn => {
                // Directed edges ordered by receiver, then sender.
                let g = &p.graph;
                let directed: Vec<(usize, usize)> = (0..g.n())
                    .flat_map(|u| g.neighbors(u).iter().map(move |&v| (u, v)))
                    .collect();
                let e = directed.len();
                let mut recv = Matrix::zeros(e, g.n());
                let mut send = Matrix::zeros(e, g.n());
                for (k, &(u, v)) in directed.iter().enumerate() {
                    recv[(k, u)] = 1.0;
                    send[(k, v)] = 1.0;
                }
                p.edge_recv = Some(recv);
                p.edge_send = Some(send);
            }
        }
        p
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn bind(&self, tape: &mut Tape) -> GraphTensors<'_> {
        let edge_recv_t = self.edge_recv.as_ref().map(|m| tape.leaf(m.transpose()));
        GraphTensors {
            n: self.graph.n(),
            a_renorm: self.a_renorm.as_ref().map(|m| tape.leaf(m.clone())),
            mask: &self.mask,
            edge_recv: self.edge_recv.as_ref().map(|m| tape.leaf(m.clone())),
            edge_send: self.edge_send.as_ref().map(|m| tape.leaf(m.clone())),
            edge_recv_t,
        }
    }
}

/// Tensors produced by one model forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub logits: Tensor,
    /// `H^(0) ..= H^(K)`.
    pub embeddings: Vec<Tensor>,
    /// Per-layer attention matrices (GAT only).
    pub attention: Vec<Tensor>,
    pub mode: AlignMode,
}

/// Encoder, `K` message-passing layers (optionally standardized and
/// aligned), and a node readout head.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    /// Parameters drawn from `ChaCha8(seed)` on the parameter-init stream.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let params = ModelParams::init(&cfg, &mut seeded(seed, streams::PARAM_INIT));
        Ok(Self { cfg, params })
    }

    pub fn with_params(cfg: ModelConfig, params: ModelParams) -> Result<Self> {
        cfg.validate()?;
        if params.layers.len() != cfg.depth {
            return Err(Error::validation("parameter depth differs from config"));
        }
        Ok(Self { cfg, params })
    }

    /// Runs the `K` layers from `h0`, returning `H^(0) ..= H^(K)` and any
    /// attention matrices.
    pub fn propagate<R: RngCore>(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        g: &GraphTensors,
        h0: Tensor,
        align: &mut AlignConfig<R>,
    ) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
        // With standardization the layer runs linear, is standardized, and
        // only then goes through the nonlinearity (conv, norm, activation).
        let nl = if self.cfg.use_standardization {
            Nonlinearity::Identity
        } else {
            self.cfg.nonlinearity
        };
        let mut embeddings = vec![h0];
        let mut attention = Vec::new();
        let mut h = h0;
        for layer in &bound.layers {
            let mut h_bar = match self.cfg.layer_kind {
                LayerKind::Gcn => gcn_forward(tape, g, h, layer, nl)?,
                LayerKind::Gat => {
                    let (out, alpha) = gat_forward(tape, g, h, layer, nl)?;
                    attention.push(alpha);
                    out
                }
                LayerKind::GatedGcn => gatedgcn_forward(tape, g, h, layer, nl)?,
            };
            if let Some((scale, shift)) = layer.norm {
                h_bar = standardize(tape, h_bar, scale, shift)?;
                h_bar = self.cfg.nonlinearity.apply(tape, h_bar)?;
            }
            h = if self.cfg.use_randalign {
                randalign_update(tape, h, h_bar, align)?
            } else {
                h_bar
            };
            embeddings.push(h);
        }
        Ok((embeddings, attention))
    }

    pub fn forward<R: RngCore>(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        graph: &PreparedGraph,
        x: &Matrix,
        align: &mut AlignConfig<R>,
    ) -> Result<ForwardPass> {
        if x.rows() != graph.graph().n() || x.cols() != self.cfg.d_in {
            return Err(Error::shape(
                "forward",
                format!(
                    "features {:?} for {} nodes, d_in {}",
                    x.shape(),
                    graph.graph().n(),
                    self.cfg.d_in
                ),
            ));
        }
        let g = graph.bind(tape);
        let x = tape.leaf(x.clone());
        let h0 = encode(tape, x, &bound.encoder)?;
        let (embeddings, attention) = self.propagate(tape, bound, &g, h0, align)?;
        let logits = readout_node(tape, *embeddings.last().expect("non-empty"), &bound.head)?;
        Ok(ForwardPass {
            logits,
            embeddings,
            attention,
            mode: align.mode,
        })
    }

    /// Eval-mode embedding values `H^(0) ..= H^(K)`.
    pub fn embeddings_eval(&self, graph: &PreparedGraph, x: &Matrix) -> Result<Vec<Matrix>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let mut align = AlignConfig::new(AlignMode::Eval, self.cfg.align_scaling, seeded(0, 0));
        let pass = self.forward(&mut tape, &bound, graph, x, &mut align)?;
        Ok(pass
            .embeddings
            .iter()
            .map(|t| tape.value(*t).clone())
            .collect())
    }
}
