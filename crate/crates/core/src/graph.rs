//! User graphs and their random-walk normalized Laplacians.
//!
//! Nodes are `0..n` in memory. The edge-list text format is 1-indexed: one
//! `j k` pair per line, `#` starts a comment, and an optional `# nodes N`
//! header records nodes that carry no edge.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use petgraph::unionfind::UnionFind;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node {node} is isolated (degree 0)")]
    IsolatedNode { node: usize },
    #[error("self-loop at node {node}")]
    SelfLoop { node: usize },
    #[error("edge ({j}, {k}) references a node outside 1..={n}")]
    NodeOutOfRange { j: usize, k: usize, n: usize },
    #[error("a graph needs at least {min} nodes, got {n}")]
    TooFewNodes { n: usize, min: usize },
    #[error("edge probability {0} is outside (0, 1]")]
    BadProbability(f64),
    #[error("dimension mismatch: {what} has {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("edge list line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Undirected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl UserGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
        }
    }

    /// Builds a graph from 0-indexed pairs. Duplicates (in either
    /// orientation) collapse; self-loops and out-of-range nodes are errors.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::empty(n);
        for (j, k) in edges {
            g.add_edge(j, k)?;
        }
        Ok(g)
    }

    /// Inserts `{j, k}`; returns whether it was new.
    pub fn add_edge(&mut self, j: usize, k: usize) -> Result<bool, GraphError> {
        if j >= self.n || k >= self.n {
            return Err(GraphError::NodeOutOfRange {
                j: j + 1,
                k: k + 1,
                n: self.n,
            });
        }
        if j == k {
            return Err(GraphError::SelfLoop { node: j + 1 });
        }
        Ok(self.edges.insert((j.min(k), j.max(k))))
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(j, k)` with `j < k`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, j: usize, k: usize) -> bool {
        self.edges.contains(&(j.min(k), j.max(k)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(j, k) in &self.edges {
            deg[j] += 1;
            deg[k] += 1;
        }
        deg
    }

    /// Sorted neighbor lists.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(j, k) in &self.edges {
            adj[j].push(k);
            adj[k].push(j);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Component label of each node (labels are arbitrary but consistent).
    pub fn components(&self) -> Vec<usize> {
        let mut uf = UnionFind::<usize>::new(self.n);
        for &(j, k) in &self.edges {
            uf.union(j, k);
        }
        uf.into_labeling()
    }

    pub fn is_connected(&self) -> bool {
        let labels = self.components();
        labels.iter().all(|&c| c == labels[0])
    }

    /// Serializes to the 1-indexed edge-list format.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# nodes {}\n", self.n);
        for &(j, k) in &self.edges {
            let _ = writeln!(out, "{} {}", j + 1, k + 1);
        }
        out
    }

    /// Parses the 1-indexed edge-list format. Without a `# nodes N` header
    /// the node count is the largest index seen.
    pub fn from_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut declared: Option<usize> = None;
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let mut words = comment.split_whitespace();
                if words.next() == Some("nodes") {
                    let n = words
                        .next()
                        .and_then(|w| w.parse::<usize>().ok())
                        .ok_or_else(|| GraphError::Parse {
                            line: line_no,
                            msg: "malformed `# nodes N` header".into(),
                        })?;
                    declared = Some(n);
                }
                continue;
            }
            let mut fields = line.split_whitespace();
            let mut next = |name: &str| -> Result<usize, GraphError> {
                let field = fields.next().ok_or_else(|| GraphError::Parse {
                    line: line_no,
                    msg: format!("missing {name} node"),
                })?;
                let v: usize = field.parse().map_err(|_| GraphError::Parse {
                    line: line_no,
                    msg: format!("`{field}` is not a node index"),
                })?;
                if v == 0 {
                    return Err(GraphError::Parse {
                        line: line_no,
                        msg: "node indices are 1-based".into(),
                    });
                }
                Ok(v)
            };
            let j = next("first")?;
            let k = next("second")?;
            if fields.next().is_some() {
                return Err(GraphError::Parse {
                    line: line_no,
                    msg: "expected exactly two node indices".into(),
                });
            }
            pairs.push((j, k));
        }
        let max_seen = pairs.iter().map(|&(j, k)| j.max(k)).max().unwrap_or(0);
        let n = declared.unwrap_or(max_seen);
        Self::from_edges(n, pairs.into_iter().map(|(j, k)| (j - 1, k - 1)))
    }
}

/// Erdős–Rényi `G(n, p)`: each of the `n(n−1)/2` pairs is included
/// independently with probability `p`, visited in lexicographic order.
pub fn generate_er_graph<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    rng: &mut R,
) -> Result<UserGraph, GraphError> {
    if n < 2 {
        return Err(GraphError::TooFewNodes { n, min: 2 });
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(GraphError::BadProbability(p));
    }
    let coin = Bernoulli::new(p).map_err(|_| GraphError::BadProbability(p))?;
    let mut g = UserGraph::empty(n);
    for j in 0..n {
        for k in (j + 1)..n {
            if coin.sample(rng) {
                g.edges.insert((j, k));
            }
        }
    }
    Ok(g)
}

/// Repairs connectivity: while the graph is disconnected, adds one edge
/// chosen uniformly among all node pairs lying in different components.
/// A connected input is returned unchanged.
pub fn ensure_connected<R: Rng + ?Sized>(
    mut g: UserGraph,
    rng: &mut R,
) -> Result<UserGraph, GraphError> {
    if g.n < 2 {
        return Err(GraphError::TooFewNodes { n: g.n, min: 2 });
    }
    loop {
        let labels = g.components();
        let mut candidates = Vec::new();
        for j in 0..g.n {
            for k in (j + 1)..g.n {
                if labels[j] != labels[k] {
                    candidates.push((j, k));
                }
            }
        }
        if candidates.is_empty() {
            return Ok(g);
        }
        let (j, k) = candidates[rng.random_range(0..candidates.len())];
        g.edges.insert((j, k));
    }
}

/// Random-walk normalized Laplacian: `l_jj = 1`, `l_jk = −1/deg(j)` on edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    matrix: DMatrix<f64>,
    neighbors: Vec<Vec<usize>>,
}

/// Builds the random-walk Laplacian. Every node needs degree ≥ 1, except
/// that a single-node graph is accepted as `L = [1]`.
pub fn build_random_walk_laplacian(g: &UserGraph) -> Result<Laplacian, GraphError> {
    let n = g.node_count();
    if n == 0 {
        return Err(GraphError::TooFewNodes { n, min: 1 });
    }
    let neighbors = g.neighbors();
    if n > 1 {
        if let Some(node) = neighbors.iter().position(Vec::is_empty) {
            return Err(GraphError::IsolatedNode { node: node + 1 });
        }
    }
    let mut matrix = DMatrix::<f64>::identity(n, n);
    for (j, nbrs) in neighbors.iter().enumerate() {
        let w = -1.0 / nbrs.len() as f64;
        for &k in nbrs {
            matrix[(j, k)] = w;
        }
    }
    Ok(Laplacian { matrix, neighbors })
}

impl Laplacian {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn entry(&self, j: usize, k: usize) -> f64 {
        self.matrix[(j, k)]
    }

    pub fn diag(&self, j: usize) -> f64 {
        self.matrix[(j, j)]
    }

    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.neighbors[j]
    }

    pub fn degree(&self, j: usize) -> usize {
        self.neighbors[j].len()
    }

    /// `(j, k, l_jk)` for every neighbor `k` of `j`.
    pub fn off_diagonal(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.neighbors[j]
            .iter()
            .map(move |&k| (k, self.matrix[(j, k)]))
    }
}

/// Smoothness deviation of one node: `Δ_j = Σ_k l_jk μ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Delta {
    pub vector: DVector<f64>,
    pub norm: f64,
}

/// `Δ_j` for every node, where row `j` of `mus` is `μ_j`.
pub fn compute_deltas(l: &Laplacian, mus: &DMatrix<f64>) -> Result<Vec<Delta>, GraphError> {
    if mus.nrows() != l.n() {
        return Err(GraphError::DimensionMismatch {
            what: "parameter matrix rows",
            got: mus.nrows(),
            expected: l.n(),
        });
    }
    let d = mus.ncols();
    Ok((0..l.n())
        .map(|j| {
            // Σ_k l_jk μ_k written as −mean_k(μ_k − μ_j), which is exactly
            // zero when all parameters agree.
            let deg = l.degree(j);
            let v = if deg == 0 {
                DVector::from_fn(d, |c, _| l.diag(j) * mus[(j, c)])
            } else {
                DVector::from_fn(d, |c, _| {
                    let spread: f64 = l.neighbors(j).iter().map(|&k| mus[(k, c)] - mus[(j, c)]).sum();
                    -spread / deg as f64
                })
            };
            let norm = v.norm();
            Delta { vector: v, norm }
        })
        .collect())
}
