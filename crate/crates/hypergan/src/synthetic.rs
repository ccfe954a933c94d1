//! Planted-community hypergraph benchmark.
//!
//! Nodes are partitioned into communities; each positive hyperedge is drawn
//! inside a single community except for a noise fraction drawn across the
//! whole node set. Features are the one-hot community indicator plus
//! Gaussian noise (sigma 0.1), which gives any encoder an honest signal to
//! learn from at desk scale.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::matrix::Matrix;
use crate::rng::named_stream;

const FEATURE_NOISE_SIGMA: f64 = 0.1;
const DUPLICATE_RETRIES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_nodes: usize,
    pub num_communities: usize,
    pub edges_per_community: usize,
    pub size_min: usize,
    pub size_max: usize,
    pub noise_edge_fraction: f64,
    pub feature_dim: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size_min < 2 {
            return Err(Error::Parameter(format!(
                "hyperedge size floor must be >= 2, got {}",
                self.size_min
            )));
        }
        if self.size_max < self.size_min {
            return Err(Error::Parameter(format!(
                "size range [{}, {}] is empty",
                self.size_min, self.size_max
            )));
        }
        if self.num_communities == 0 {
            return Err(Error::Parameter("need at least one community".into()));
        }
        if self.num_nodes / self.num_communities < self.size_min {
            return Err(Error::Parameter(format!(
                "communities of ~{} nodes are smaller than the minimum edge size {}",
                self.num_nodes / self.num_communities,
                self.size_min
            )));
        }
        if self.size_max > self.num_nodes {
            return Err(Error::Parameter(format!(
                "size_max {} exceeds the node count {}",
                self.size_max, self.num_nodes
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_edge_fraction) {
            return Err(Error::Parameter(format!(
                "noise fraction must lie in [0,1], got {}",
                self.noise_edge_fraction
            )));
        }
        if self.feature_dim < self.num_communities {
            return Err(Error::Parameter(format!(
                "feature_dim {} cannot hold a {}-community indicator",
                self.feature_dim, self.num_communities
            )));
        }
        Ok(())
    }
}

/// Generate the benchmark hypergraph and its ground-truth community labels.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Hypergraph, Vec<usize>)> {
    spec.validate()?;
    let mut rng = named_stream(spec.seed, "synthetic");

    // Balanced contiguous community assignment.
    let labels: Vec<usize> = (0..spec.num_nodes)
        .map(|v| (v * spec.num_communities / spec.num_nodes).min(spec.num_communities - 1))
        .collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); spec.num_communities];
    for (v, &c) in labels.iter().enumerate() {
        members[c].push(v);
    }
    if let Some(small) = members.iter().position(|m| m.len() < spec.size_min) {
        return Err(Error::Parameter(format!(
            "community {small} has {} nodes, smaller than the minimum edge size {}",
            members[small].len(),
            spec.size_min
        )));
    }

    let all_nodes: Vec<usize> = (0..spec.num_nodes).collect();
    let mut seen: std::collections::BTreeSet<Vec<usize>> = Default::default();
    let mut edges: Vec<Vec<usize>> = Vec::new();
    for community in 0..spec.num_communities {
        for _ in 0..spec.edges_per_community {
            let mut placed = false;
            for _ in 0..DUPLICATE_RETRIES {
                let size = rng.gen_range(spec.size_min..=spec.size_max);
                let cross = rng.gen_range(0.0..1.0) < spec.noise_edge_fraction;
                // Noise edges sample across the whole node set.
                let pool: &[usize] = if cross { &all_nodes } else { &members[community] };
                let size = size.min(pool.len());
                let mut edge: Vec<usize> =
                    pool.choose_multiple(&mut rng, size).copied().collect();
                edge.sort_unstable();
                if seen.insert(edge.clone()) {
                    edges.push(edge);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::SamplingExhausted(format!(
                    "could not draw a fresh hyperedge for community {community} \
                     after {DUPLICATE_RETRIES} attempts"
                )));
            }
        }
    }

    let mut features = Matrix::zeros(spec.num_nodes, spec.feature_dim);
    for v in 0..spec.num_nodes {
        for j in 0..spec.feature_dim {
            let indicator = if j == labels[v] { 1.0 } else { 0.0 };
            let noise: f64 = rng.sample(StandardNormal);
            features.set(v, j, indicator + FEATURE_NOISE_SIGMA * noise);
        }
    }

    let h = Hypergraph::new(edges, features)?;
    Ok((h, labels))
}
