//! Undirected weighted graphs for the DC grid and the controller
//! communication network.
//!
//! Node indices are 0-based here. Scenario files use the 1-based terminal
//! numbering; [`WeightedGraph::from_one_based`] converts.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densela::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphKind {
    /// Edge weight is the line conductance `1/R_ij` (p.u.).
    DcGrid,
    /// Edge weight is the consensus weight `c_ij`.
    Comm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("edge ({i}, {j}) references a node outside 0..{n}")]
    NodeOutOfRange { i: usize, j: usize, n: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({i}, {j})")]
    DuplicateEdge { i: usize, j: usize },
    #[error("edge ({i}, {j}) has non-positive or non-finite weight {weight}")]
    NonPositiveWeight { i: usize, j: usize, weight: f64 },
    #[error("DC grid graph is not connected")]
    Disconnected,
}

/// Undirected graph with positive edge weights, stored with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
    kind: GraphKind,
}

impl WeightedGraph {
    /// Validates and normalizes edges (0-based). DC grids must be connected.
    pub fn new(
        n: usize,
        kind: GraphKind,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (a, b, weight) in edges {
            if a >= n || b >= n {
                return Err(GraphError::NodeOutOfRange { i: a, j: b, n });
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(GraphError::NonPositiveWeight { i, j, weight });
            }
            if !seen.insert((i, j)) {
                return Err(GraphError::DuplicateEdge { i, j });
            }
            out.push(Edge { i, j, weight });
        }
        let g = Self { n, edges: out, kind };
        if kind == GraphKind::DcGrid && !connectivity_check(&g) {
            return Err(GraphError::Disconnected);
        }
        Ok(g)
    }

    /// Same as [`new`](Self::new) with 1-based node numbers.
    pub fn from_one_based(
        n: usize,
        kind: GraphKind,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, GraphError> {
        let shifted: Vec<_> = edges
            .into_iter()
            .map(|(i, j, w)| (i.wrapping_sub(1), j.wrapping_sub(1), w))
            .collect();
        Self::new(n, kind, shifted).map_err(|e| match e {
            GraphError::NodeOutOfRange { i, j, n } => GraphError::NodeOutOfRange {
                i: i.wrapping_add(1),
                j: j.wrapping_add(1),
                n,
            },
            other => other,
        })
    }

    /// DC grid from line resistances `R_ij` (0-based).
    pub fn dc_from_resistances(
        n: usize,
        lines: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, GraphError> {
        let mut conductances = Vec::new();
        for (i, j, r) in lines {
            if !(r > 0.0 && r.is_finite()) {
                return Err(GraphError::NonPositiveWeight { i, j, weight: r });
            }
            conductances.push((i, j, 1.0 / r));
        }
        Self::new(n, GraphKind::DcGrid, conductances)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.weight).collect()
    }

    pub fn laplacian(&self) -> Matrix {
        laplacian(self)
    }

    pub fn incidence(&self) -> IncidenceMatrix {
        let mut b = Matrix::zeros(self.n, self.edges.len());
        for (k, e) in self.edges.iter().enumerate() {
            b[(e.i, k)] = 1.0;
            b[(e.j, k)] = -1.0;
        }
        IncidenceMatrix { matrix: b }
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.edges.iter().filter_map(move |e| {
            if e.i == node {
                Some((e.j, e.weight))
            } else if e.j == node {
                Some((e.i, e.weight))
            } else {
                None
            }
        })
    }
}

/// Vertex-edge incidence matrix: column `k` has `+1` at the lower endpoint of
/// edge `k` and `-1` at the higher one.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    pub matrix: Matrix,
}

impl IncidenceMatrix {
    /// `B W Bᵀ` for the given edge weights.
    pub fn weighted_laplacian(&self, weights: &[f64]) -> Matrix {
        let b = &self.matrix;
        assert_eq!(weights.len(), b.cols());
        let mut bw = b.clone();
        for i in 0..b.rows() {
            for (k, w) in weights.iter().enumerate() {
                bw[(i, k)] *= w;
            }
        }
        bw.matmul(&b.transpose())
    }
}

/// Weighted Laplacian: `L_ii = Σ_j w_ij`, `L_ij = -w_ij`.
pub fn laplacian(g: &WeightedGraph) -> Matrix {
    let mut l = Matrix::zeros(g.n, g.n);
    for e in &g.edges {
        l[(e.i, e.i)] += e.weight;
        l[(e.j, e.j)] += e.weight;
        l[(e.i, e.j)] -= e.weight;
        l[(e.j, e.i)] -= e.weight;
    }
    l
}

/// Breadth-first search from node 0.
pub fn connectivity_check(g: &WeightedGraph) -> bool {
    if g.n == 0 {
        return false;
    }
    let mut visited = vec![false; g.n];
    let mut queue = VecDeque::from([0usize]);
    visited[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for (v, _) in g.neighbors(u) {
            if !visited[v] {
                visited[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == g.n
}

/// All `n(n-1)/2` pairs with the same weight.
pub fn complete_comm_graph(n: usize, weight: f64) -> Result<WeightedGraph, GraphError> {
    let edges = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j, weight)));
    WeightedGraph::new(n, GraphKind::Comm, edges)
}
