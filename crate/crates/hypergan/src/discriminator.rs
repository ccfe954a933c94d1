//! Hyperedge candidate scorer.
//!
//! A candidate node set is scored by gathering its member node embeddings,
//! pooling them with element-wise max minus min (permutation invariant,
//! sensitive to within-candidate diversity), and passing the pooled vector
//! through a d×128×8×1 fully-connected predictor with a sigmoid output.
//! Generated negatives arrive with per-node membership weights that scale
//! the gathered rows before pooling, which is what lets the generator
//! receive gradient through discrete node selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Value};
use crate::encoder::glorot;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const HIDDEN1: usize = 128;
const HIDDEN2: usize = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminatorParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub w3: Matrix,
    pub b3: Matrix,
    pub hidden_slope: f64,
}

impl DiscriminatorParams {
    pub fn init<R: Rng>(embed_dim: usize, rng: &mut R) -> Self {
        DiscriminatorParams {
            w1: glorot(embed_dim, HIDDEN1, rng),
            b1: Matrix::zeros(1, HIDDEN1),
            w2: glorot(HIDDEN1, HIDDEN2, rng),
            b2: Matrix::zeros(1, HIDDEN2),
            w3: glorot(HIDDEN2, 1, rng),
            b3: Matrix::zeros(1, 1),
            hidden_slope: 0.01,
        }
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundDiscriminator {
        BoundDiscriminator {
            w1: tape.leaf(self.w1.clone()),
            b1: tape.leaf(self.b1.clone()),
            w2: tape.leaf(self.w2.clone()),
            b2: tape.leaf(self.b2.clone()),
            w3: tape.leaf(self.w3.clone()),
            b3: tape.leaf(self.b3.clone()),
            hidden_slope: self.hidden_slope,
        }
    }

    /// Rebuild the bound structure from existing tape values in `tensors()`
    /// order, for gradient checks that own the leaves.
    pub fn bind_values_static(values: &[Value]) -> BoundDiscriminator {
        assert_eq!(values.len(), 6);
        BoundDiscriminator {
            w1: values[0],
            b1: values[1],
            w2: values[2],
            b2: values[3],
            w3: values[4],
            b3: values[5],
            hidden_slope: 0.01,
        }
    }
}

pub struct BoundDiscriminator {
    pub w1: Value,
    pub b1: Value,
    pub w2: Value,
    pub b2: Value,
    pub w3: Value,
    pub b3: Value,
    pub hidden_slope: f64,
}

impl BoundDiscriminator {
    pub fn values(&self) -> Vec<Value> {
        vec![self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]
    }
}

/// Element-wise max minus element-wise min across the (optionally weighted)
/// rows of `node_embs` → 1×d pooled embedding.
pub fn aggregate_maxmin(
    tape: &mut Tape,
    node_embs: Value,
    weights: Option<Value>,
) -> Result<Value> {
    if tape.data(node_embs).rows() == 0 {
        return Err(Error::Parameter("aggregate_maxmin needs at least one row".into()));
    }
    let rows = match weights {
        Some(w) => tape.row_scale(node_embs, w)?,
        None => node_embs,
    };
    let hi = tape.col_max(rows)?;
    let lo = tape.col_min(rows)?;
    tape.sub(hi, lo)
}

/// Three affine layers with LeakyReLU hidden activations and a sigmoid
/// output → scalar in (0,1).
pub fn predict(tape: &mut Tape, disc: &BoundDiscriminator, q: Value) -> Result<Value> {
    let h1 = tape.affine(q, disc.w1, disc.b1)?;
    let h1 = tape.leaky_relu(h1, disc.hidden_slope);
    let h2 = tape.affine(h1, disc.w2, disc.b2)?;
    let h2 = tape.leaky_relu(h2, disc.hidden_slope);
    let logit = tape.affine(h2, disc.w3, disc.b3)?;
    Ok(tape.sigmoid(logit))
}

/// Gather the candidate's member rows of P and pool them.
pub fn aggregate_candidate(
    tape: &mut Tape,
    p: Value,
    candidate: &[usize],
    weights: Option<Value>,
) -> Result<Value> {
    if candidate.is_empty() {
        return Err(Error::Parameter("cannot score an empty candidate".into()));
    }
    let rows = tape.gather_rows(p, candidate)?;
    aggregate_maxmin(tape, rows, weights)
}

/// Full candidate score: gather → max-min pool → predict.
pub fn score_candidate(
    tape: &mut Tape,
    disc: &BoundDiscriminator,
    p: Value,
    candidate: &[usize],
    weights: Option<Value>,
) -> Result<Value> {
    let q = aggregate_candidate(tape, p, candidate, weights)?;
    predict(tape, disc, q)
}
