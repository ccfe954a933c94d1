//! Hypergraph data model, file ingestion, and dataset splitting.
//!
//! File formats:
//! - edge file: UTF-8 text, one hyperedge per line as comma-separated node
//!   ids, `#` comment lines skipped;
//! - feature file: one node per line, space-separated floats, line i holds
//!   the features of node i (node count = line count);
//! - split file: three lines `train:`, `valid:`, `test:`, each followed on
//!   the same line by comma-separated edge indices.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Node ids are dense integers `0..num_nodes`.
#[derive(Debug, Clone)]
pub struct Hypergraph {
    num_nodes: usize,
    /// Each hyperedge as a sorted, deduplicated node-id list.
    edges: Vec<Vec<usize>>,
    /// Incident edge ids per node, compressed row form over |V|×|E|.
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    /// |V|×d node features.
    features: Matrix,
}

impl Hypergraph {
    /// Build from edge node-sets and a feature matrix with one row per node.
    /// Edges are deduplicated as sets; exact duplicate edges are dropped
    /// with a warning.
    pub fn new(edge_sets: Vec<Vec<usize>>, features: Matrix) -> Result<Self> {
        let num_nodes = features.rows();
        let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
        let mut edges = Vec::with_capacity(edge_sets.len());
        for (line, raw) in edge_sets.into_iter().enumerate() {
            if raw.is_empty() {
                return Err(Error::Format(format!("edge {line} is empty")));
            }
            let set: BTreeSet<usize> = raw.into_iter().collect();
            if let Some(&bad) = set.iter().find(|&&v| v >= num_nodes) {
                return Err(Error::Parameter(format!(
                    "edge {line} references node {bad}, but only {num_nodes} nodes have features"
                )));
            }
            let edge: Vec<usize> = set.into_iter().collect();
            if !seen.insert(edge.clone()) {
                log::warn!("dropping duplicate hyperedge {edge:?} (edge {line})");
                continue;
            }
            edges.push(edge);
        }

        // CSR over nodes: incident edge lists.
        let mut counts = vec![0usize; num_nodes];
        for edge in &edges {
            for &v in edge {
                counts[v] += 1;
            }
        }
        let mut row_ptr = vec![0usize; num_nodes + 1];
        for v in 0..num_nodes {
            row_ptr[v + 1] = row_ptr[v] + counts[v];
        }
        let mut col_idx = vec![0usize; row_ptr[num_nodes]];
        let mut cursor = row_ptr.clone();
        for (e, edge) in edges.iter().enumerate() {
            for &v in edge {
                col_idx[cursor[v]] = e;
                cursor[v] += 1;
            }
        }

        Ok(Hypergraph { num_nodes, edges, row_ptr, col_idx, features })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &[usize] {
        &self.edges[e]
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    /// Edge ids incident to node v.
    pub fn incident_edges(&self, v: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[v]..self.row_ptr[v + 1]]
    }

    pub fn node_degree(&self, v: usize) -> usize {
        self.row_ptr[v + 1] - self.row_ptr[v]
    }

    /// Incidence entry h[v][e]: true iff node v belongs to edge e.
    /// Incident lists are sorted by construction.
    pub fn incident(&self, v: usize, e: usize) -> bool {
        self.incident_edges(v).binary_search(&e).is_ok()
    }

    /// Rebuild edge node-sets from the compressed incidence structure
    /// (round-trip check surface).
    pub fn edges_from_incidence(&self) -> Vec<Vec<usize>> {
        let mut rebuilt = vec![Vec::new(); self.edges.len()];
        for v in 0..self.num_nodes {
            for &e in self.incident_edges(v) {
                rebuilt[e].push(v);
            }
        }
        for edge in &mut rebuilt {
            edge.sort_unstable();
        }
        rebuilt
    }
}

/// Undirected simple graph obtained by connecting every pair of nodes that
/// co-appear in some hyperedge. No self-loops.
#[derive(Debug, Clone)]
pub struct CliqueExpansion {
    /// Sorted neighbor lists.
    adj: Vec<Vec<usize>>,
    /// Unique undirected edges as (u, v) with u < v.
    pairs: Vec<(usize, usize)>,
}

impl CliqueExpansion {
    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

/// Expand a hypergraph into its clique graph.
pub fn clique_expand(h: &Hypergraph) -> CliqueExpansion {
    let mut pair_set: BTreeSet<(usize, usize)> = BTreeSet::new();
    for edge in h.edges() {
        for i in 0..edge.len() {
            for j in (i + 1)..edge.len() {
                pair_set.insert((edge[i], edge[j]));
            }
        }
    }
    let mut adj = vec![Vec::new(); h.num_nodes()];
    let pairs: Vec<(usize, usize)> = pair_set.into_iter().collect();
    for &(u, v) in &pairs {
        adj[u].push(v);
        adj[v].push(u);
    }
    for nbrs in &mut adj {
        nbrs.sort_unstable();
    }
    CliqueExpansion { adj, pairs }
}

/// Disjoint train/valid/test positive-edge indices, 60/20/20.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSet {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Randomly partition the positive hyperedges 60/20/20. Proportions are
/// within one edge of exact thanks to rounding; requires at least 5 edges.
pub fn split_dataset<R: Rng>(h: &Hypergraph, rng: &mut R) -> Result<SplitSet> {
    let n = h.num_edges();
    if n < 5 {
        return Err(Error::Parameter(format!(
            "dataset split needs at least 5 hyperedges, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = (n as f64 * 0.6).round() as usize;
    let n_valid = (n as f64 * 0.2).round() as usize;
    let train = order[..n_train].to_vec();
    let valid = order[n_train..n_train + n_valid].to_vec();
    let test = order[n_train + n_valid..].to_vec();
    Ok(SplitSet { train, valid, test })
}

impl SplitSet {
    pub fn to_file_string(&self) -> String {
        fn join(ids: &[usize]) -> String {
            ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
        }
        format!(
            "train: {}\nvalid: {}\ntest: {}\n",
            join(&self.train),
            join(&self.valid),
            join(&self.test)
        )
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut parts: [Option<Vec<usize>>; 3] = [None, None, None];
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line
                .split_once(':')
                .ok_or_else(|| Error::Format(format!("split line without `:`: {line}")))?;
            let slot = match key.trim() {
                "train" => 0,
                "valid" => 1,
                "test" => 2,
                other => return Err(Error::Format(format!("unknown split section `{other}`"))),
            };
            let ids = parse_id_list(rest)?;
            parts[slot] = Some(ids);
        }
        match parts {
            [Some(train), Some(valid), Some(test)] => Ok(SplitSet { train, valid, test }),
            _ => Err(Error::Format("split file must contain train:, valid: and test: lines".into())),
        }
    }
}

fn parse_id_list(text: &str) -> Result<Vec<usize>> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad id `{}`", tok.trim())))
        })
        .collect()
}

/// Parse the edge and feature files into a hypergraph.
pub fn parse_hypergraph(edge_file: &Path, feature_file: &Path) -> Result<Hypergraph> {
    let edge_text = std::fs::read_to_string(edge_file).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", edge_file.display())))
    })?;
    let feat_text = std::fs::read_to_string(feature_file).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", feature_file.display())))
    })?;
    parse_hypergraph_text(&edge_text, &feat_text)
}

pub fn parse_hypergraph_text(edge_text: &str, feature_text: &str) -> Result<Hypergraph> {
    let features = parse_features(feature_text)?;
    let edge_sets = parse_edge_list_text(edge_text)?;
    Hypergraph::new(edge_sets, features)
}

/// Parse node sets in the edge-file format (used for hyperedges, sampled
/// negatives and candidate files alike).
pub fn parse_edge_list_text(edge_text: &str) -> Result<Vec<Vec<usize>>> {
    let mut edge_sets = Vec::new();
    for (lineno, line) in edge_text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.starts_with('#') {
            continue;
        }
        if trimmed.is_empty() {
            return Err(Error::Format(format!("edge file line {}: empty edge", lineno + 1)));
        }
        let ids: Vec<usize> = trimmed
            .split(',')
            .map(|tok| {
                tok.trim().parse::<usize>().map_err(|_| {
                    Error::Format(format!(
                        "edge file line {}: bad node id `{}`",
                        lineno + 1,
                        tok.trim()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        edge_sets.push(ids);
    }
    Ok(edge_sets)
}

fn parse_features(text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| {
                    Error::Format(format!(
                        "feature file line {}: bad float `{tok}`",
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(vals.len()),
            Some(w) if w != vals.len() => {
                return Err(Error::Format(format!(
                    "feature file line {}: {} values, expected {w}",
                    lineno + 1,
                    vals.len()
                )))
            }
            _ => {}
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::Format("feature file is empty".into()));
    }
    Ok(Matrix::from_rows(&rows))
}

/// Render node sets in the edge-file format.
pub fn edges_to_text(edges: &[Vec<usize>]) -> String {
    let mut out = String::new();
    for edge in edges {
        let line: Vec<String> = edge.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
