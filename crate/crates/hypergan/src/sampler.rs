//! Heuristic negative-hyperedge samplers and hyperedge-size sampling.
//!
//! Three samplers build contrastive node sets of increasing difficulty:
//! - SNS: n nodes uniformly at random;
//! - MNS: a connected n-node set in the clique expansion, grown from a
//!   uniformly random expansion edge by repeatedly adding a uniformly random
//!   node adjacent to the current set;
//! - CNS: take a hyperedge e and a member u, replace u with an outside node
//!   v adjacent to every remaining member; e, u, v drawn uniformly in that
//!   order (two-stage uniform).
//!
//! All samplers are pure given (hypergraph, rng); a fixed seed reproduces
//! the draw sequence bitwise.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::hypergraph::{clique_expand, CliqueExpansion, Hypergraph};

/// Retry budget before a sampler reports exhaustion.
pub const MAX_RETRIES: usize = 100;

/// Empirical histogram over positive hyperedge sizes.
#[derive(Debug, Clone)]
pub struct SizeDistribution {
    /// (size, count) in ascending size order; sizes below the floor excluded.
    support: Vec<(usize, usize)>,
    total: usize,
}

impl SizeDistribution {
    /// Build from the observed sizes, keeping only sizes >= floor.
    pub fn from_sizes(sizes: impl IntoIterator<Item = usize>, floor: usize) -> Self {
        let mut counts: std::collections::BTreeMap<usize, usize> = Default::default();
        for s in sizes {
            if s >= floor {
                *counts.entry(s).or_insert(0) += 1;
            }
        }
        let support: Vec<(usize, usize)> = counts.into_iter().collect();
        let total = support.iter().map(|&(_, c)| c).sum();
        SizeDistribution { support, total }
    }

    /// Sizes of the training positives of `h` listed by `edge_indices`.
    pub fn from_training_edges(h: &Hypergraph, edge_indices: &[usize], floor: usize) -> Self {
        Self::from_sizes(edge_indices.iter().map(|&e| h.edge(e).len()), floor)
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn support(&self) -> &[(usize, usize)] {
        &self.support
    }

    /// Draw a size with probability proportional to its training frequency.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<usize> {
        if self.total == 0 {
            return Err(Error::SamplingExhausted(
                "empty size distribution: no observed sizes at or above the floor".into(),
            ));
        }
        let mut pick = rng.gen_range(0..self.total);
        for &(size, count) in &self.support {
            if pick < count {
                return Ok(size);
            }
            pick -= count;
        }
        unreachable!("cumulative counts cover the draw range")
    }
}

/// Uniform random n-subset of the nodes, without replacement (SNS).
pub fn sns<R: Rng>(h: &Hypergraph, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::Parameter(format!("sns needs n >= 2, got {n}")));
    }
    if n > h.num_nodes() {
        return Err(Error::Parameter(format!(
            "sns needs n <= |V| = {}, got {n}",
            h.num_nodes()
        )));
    }
    let mut picked = rand::seq::index::sample(rng, h.num_nodes(), n).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Connected n-node set in the clique expansion (MNS). Growth restarts from
/// a fresh expansion edge when the current component runs out of frontier;
/// after [`MAX_RETRIES`] failed attempts the sampler reports exhaustion.
pub fn mns<R: Rng>(
    h: &Hypergraph,
    expansion: &CliqueExpansion,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::Parameter(format!("mns needs n >= 2, got {n}")));
    }
    if n > h.num_nodes() {
        return Err(Error::Parameter(format!(
            "mns needs n <= |V| = {}, got {n}",
            h.num_nodes()
        )));
    }
    if expansion.pairs().is_empty() {
        return Err(Error::SamplingExhausted("clique expansion has no edges".into()));
    }
    for _ in 0..MAX_RETRIES {
        let &(u, v) = expansion
            .pairs()
            .choose(rng)
            .expect("expansion edge list is nonempty");
        let mut current: BTreeSet<usize> = [u, v].into_iter().collect();
        while current.len() < n {
            let frontier: Vec<usize> = {
                let mut f: BTreeSet<usize> = BTreeSet::new();
                for &m in &current {
                    for &nb in expansion.neighbors(m) {
                        if !current.contains(&nb) {
                            f.insert(nb);
                        }
                    }
                }
                f.into_iter().collect()
            };
            match frontier.choose(rng) {
                Some(&next) => {
                    current.insert(next);
                }
                None => break, // component exhausted, restart
            }
        }
        if current.len() == n {
            return Ok(current.into_iter().collect());
        }
    }
    Err(Error::SamplingExhausted(format!(
        "mns found no connected {n}-node set in {MAX_RETRIES} attempts"
    )))
}

/// Clique negative sampling (CNS): (e \ {u}) ∪ {v} with v outside e and
/// adjacent to every node of e \ {u}.
pub fn cns<R: Rng>(
    h: &Hypergraph,
    expansion: &CliqueExpansion,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if h.num_edges() == 0 {
        return Err(Error::SamplingExhausted("hypergraph has no hyperedges".into()));
    }
    for _ in 0..MAX_RETRIES {
        let e = rng.gen_range(0..h.num_edges());
        let edge = h.edge(e);
        let u = *edge.choose(rng).expect("hyperedges are nonempty");
        let rest: Vec<usize> = edge.iter().copied().filter(|&x| x != u).collect();
        let candidates: Vec<usize> = (0..h.num_nodes())
            .filter(|&v| !edge.contains(&v) && rest.iter().all(|&r| expansion.adjacent(v, r)))
            .collect();
        if let Some(&v) = candidates.choose(rng) {
            let mut out = rest;
            out.push(v);
            out.sort_unstable();
            return Ok(out);
        }
    }
    Err(Error::SamplingExhausted(format!(
        "cns found no valid (e, u, v) replacement in {MAX_RETRIES} attempts"
    )))
}

/// Brute-force CNS validity predicate: S = (e \ {u}) ∪ {v} for some e in
/// the hypergraph, u in e, v outside e adjacent to all of e \ {u}.
pub fn cns_valid(h: &Hypergraph, expansion: &CliqueExpansion, set: &[usize]) -> bool {
    let set: BTreeSet<usize> = set.iter().copied().collect();
    for edge in h.edges() {
        if edge.len() != set.len() {
            continue;
        }
        let edge_set: BTreeSet<usize> = edge.iter().copied().collect();
        for &u in edge {
            let mut rest = edge_set.clone();
            rest.remove(&u);
            if !rest.is_subset(&set) {
                continue;
            }
            let extra: Vec<usize> = set.difference(&rest).copied().collect();
            if extra.len() != 1 {
                continue;
            }
            let v = extra[0];
            if !edge_set.contains(&v) && rest.iter().all(|&r| expansion.adjacent(v, r)) {
                return true;
            }
        }
    }
    false
}

/// BFS connectivity of `set` inside the clique expansion.
pub fn induces_connected_subgraph(expansion: &CliqueExpansion, set: &[usize]) -> bool {
    if set.is_empty() {
        return false;
    }
    let members: BTreeSet<usize> = set.iter().copied().collect();
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    let mut queue = vec![set[0]];
    seen.insert(set[0]);
    while let Some(v) = queue.pop() {
        for &nb in expansion.neighbors(v) {
            if members.contains(&nb) && seen.insert(nb) {
                queue.push(nb);
            }
        }
    }
    seen.len() == members.len()
}

/// Convenience wrapper: expand once and sample `count` node sets with the
/// chosen method, using `sizes` for SNS/MNS draws.
pub fn sample_many<R: Rng>(
    h: &Hypergraph,
    method: Method,
    count: usize,
    sizes: &SizeDistribution,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    let expansion = clique_expand(h);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let set = match method {
            Method::Sns => sns(h, sizes.sample(rng)?, rng)?,
            Method::Mns => mns(h, &expansion, sizes.sample(rng)?, rng)?,
            Method::Cns => cns(h, &expansion, rng)?,
        };
        out.push(set);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sns,
    Mns,
    Cns,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sns" => Ok(Method::Sns),
            "mns" => Ok(Method::Mns),
            "cns" => Ok(Method::Cns),
            other => Err(Error::Parameter(format!(
                "unknown sampler `{other}`, expected sns, mns or cns"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Sns => write!(f, "sns"),
            Method::Mns => write!(f, "mns"),
            Method::Cns => write!(f, "cns"),
        }
    }
}

/// Chi-square statistic against uniform expected counts.
pub fn chi_square_uniform(observed: &[usize]) -> f64 {
    let total: usize = observed.iter().sum();
    let expected = total as f64 / observed.len() as f64;
    observed
        .iter()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum()
}
