//! Two-stage hypergraph encoder.
//!
//! Each layer alternates node→hyperedge and hyperedge→node aggregation with
//! degree-mean normalization followed by an affine map and activation:
//!
//! ```text
//! Q(l) = σ( mean_over_members(P(l-1)) · W_E(l) + b_E(l) )
//! P(l) = σ( mean_over_incident(Q(l)) · W_V(l) + b_V(l) )
//! ```
//!
//! with P(0) = X. Mean aggregation divides the node→edge sum by the edge
//! size and the edge→node sum by the node degree (degree-0 nodes keep a
//! zero row), keeping activations scale-stable across hyperedge sizes.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{RowGroups, Tape, Value};
use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    LeakyRelu(f64),
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, v: Value) -> Value {
        match self {
            Activation::Identity => v,
            Activation::LeakyRelu(slope) => tape.leaky_relu(v, slope),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub w_edge: Matrix,
    pub b_edge: Matrix,
    pub w_node: Matrix,
    pub b_node: Matrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderParams {
    pub layers: Vec<EncoderLayer>,
    pub activation: Activation,
}

/// Uniform Glorot initialization in ±sqrt(6/(fan_in+fan_out)).
pub fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Matrix::from_vec(rows, cols, data)
}

impl EncoderParams {
    /// `layers` encoder layers mapping feature width d0 to embedding width d.
    pub fn init<R: Rng>(
        feature_dim: usize,
        embed_dim: usize,
        layers: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut out = Vec::with_capacity(layers);
        let mut d_in = feature_dim;
        for _ in 0..layers {
            out.push(EncoderLayer {
                w_edge: glorot(d_in, embed_dim, rng),
                b_edge: Matrix::zeros(1, embed_dim),
                w_node: glorot(embed_dim, embed_dim, rng),
                b_node: Matrix::zeros(1, embed_dim),
            });
            d_in = embed_dim;
        }
        EncoderParams { layers: out, activation }
    }

    /// Embedding width produced by `encode` (the feature width when L = 0).
    pub fn output_dim(&self, feature_dim: usize) -> usize {
        self.layers.last().map_or(feature_dim, |l| l.w_node.cols())
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.w_edge, &l.b_edge, &l.w_node, &l.b_node])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w_edge, &mut l.b_edge, &mut l.w_node, &mut l.b_node])
            .collect()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundEncoder {
        let layers = self
            .layers
            .iter()
            .map(|l| BoundEncoderLayer {
                w_edge: tape.leaf(l.w_edge.clone()),
                b_edge: tape.leaf(l.b_edge.clone()),
                w_node: tape.leaf(l.w_node.clone()),
                b_node: tape.leaf(l.b_node.clone()),
            })
            .collect();
        BoundEncoder { layers, activation: self.activation }
    }

    /// Rebuild the bound structure from existing tape values in `tensors()`
    /// order, for gradient checks that own the leaves.
    pub fn bind_values(&self, values: &[Value]) -> BoundEncoder {
        assert_eq!(values.len(), self.layers.len() * 4);
        let layers = values
            .chunks_exact(4)
            .map(|c| BoundEncoderLayer {
                w_edge: c[0],
                b_edge: c[1],
                w_node: c[2],
                b_node: c[3],
            })
            .collect();
        BoundEncoder { layers, activation: self.activation }
    }
}

pub struct BoundEncoderLayer {
    pub w_edge: Value,
    pub b_edge: Value,
    pub w_node: Value,
    pub b_node: Value,
}

pub struct BoundEncoder {
    pub layers: Vec<BoundEncoderLayer>,
    pub activation: Activation,
}

impl BoundEncoder {
    pub fn values(&self) -> Vec<Value> {
        self.layers
            .iter()
            .flat_map(|l| [l.w_edge, l.b_edge, l.w_node, l.b_node])
            .collect()
    }
}

/// Membership structure driving the aggregation, restricted to a chosen
/// edge subset (training positives during learning).
#[derive(Debug, Clone)]
pub struct IncidenceGroups {
    /// Per selected edge: its member node ids.
    pub edge_members: RowGroups,
    /// Per node: positions of its incident edges within the selected list.
    pub node_memberships: RowGroups,
    pub num_nodes: usize,
}

impl IncidenceGroups {
    /// Restrict to `edge_indices` of `h`; positions in the groups refer to
    /// the order of `edge_indices`.
    pub fn from_edges(h: &Hypergraph, edge_indices: &[usize]) -> Self {
        let edge_members: Vec<Vec<usize>> =
            edge_indices.iter().map(|&e| h.edge(e).to_vec()).collect();
        let mut node_memberships = vec![Vec::new(); h.num_nodes()];
        for (pos, members) in edge_members.iter().enumerate() {
            for &v in members {
                node_memberships[v].push(pos);
            }
        }
        IncidenceGroups {
            edge_members: Rc::new(edge_members),
            node_memberships: Rc::new(node_memberships),
            num_nodes: h.num_nodes(),
        }
    }

    /// All edges of `h`.
    pub fn full(h: &Hypergraph) -> Self {
        let all: Vec<usize> = (0..h.num_edges()).collect();
        Self::from_edges(h, &all)
    }
}

/// Run the encoder over node features already on the tape. Returns the
/// final node embeddings P (|V|×d) and hyperedge embeddings Q (|E'|×d).
/// With zero layers P is the features and Q their per-edge means.
pub fn encode(
    tape: &mut Tape,
    enc: &BoundEncoder,
    groups: &IncidenceGroups,
    features: Value,
) -> Result<(Value, Value)> {
    if tape.data(features).rows() != groups.num_nodes {
        return Err(Error::Shape(format!(
            "feature rows {} do not match node count {}",
            tape.data(features).rows(),
            groups.num_nodes
        )));
    }
    let mut p = features;
    let mut q = tape.group_mean_rows(p, Rc::clone(&groups.edge_members))?;
    for layer in &enc.layers {
        let q_agg = tape.group_mean_rows(p, Rc::clone(&groups.edge_members))?;
        let q_lin = tape.affine(q_agg, layer.w_edge, layer.b_edge)?;
        q = enc.activation.apply(tape, q_lin);

        let p_agg = tape.group_mean_rows(q, Rc::clone(&groups.node_memberships))?;
        let p_lin = tape.affine(p_agg, layer.w_node, layer.b_node)?;
        p = enc.activation.apply(tape, p_lin);
    }
    Ok((p, q))
}

/// One-call convenience: bind parameters, put features on a fresh section of
/// `tape`, and encode.
pub fn encode_with(
    tape: &mut Tape,
    params: &EncoderParams,
    groups: &IncidenceGroups,
    features: &Matrix,
) -> Result<(Value, Value)> {
    let bound = params.bind(tape);
    let x = tape.leaf(features.clone());
    encode(tape, &bound, groups, x)
}
