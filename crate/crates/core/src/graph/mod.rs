//! Weighted undirected graphs, normalized Laplacians and the spectral
//! utilities built on them.

mod csr;
pub mod io;
mod laplacian;
mod spectral;

pub use csr::CsrMatrix;
pub use laplacian::{
    estimate_lambda_max, normalized_laplacian, scale_laplacian, NormalizedLaplacian,
    DEFAULT_LAMBDA_TOL, LAMBDA_MAX_ITERATION_CAP,
};
#[cfg(test)]
pub(crate) use spectral::exact_scaled;
pub use spectral::{
    dense_eigen, dense_spectral_filter, fiedler, fiedler_vector, Fiedler, DENSE_EIGEN_CAP,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for two entries describing the same undirected edge.
pub const DUPLICATE_EDGE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("vertex index {index} out of range for a graph of {n} vertices")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("edge ({i}, {j}) has invalid weight {w}; weights must be finite and nonnegative")]
    InvalidWeight { i: usize, j: usize, w: f64 },
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("conflicting weights for edge ({i}, {j}): {first} vs {second}")]
    ConflictingDuplicate {
        i: usize,
        j: usize,
        first: f64,
        second: f64,
    },
    #[error("cannot block-diagonalize an empty list of graphs")]
    EmptyGraphList,
    #[error("lambda_max must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dense eigendecomposition is capped at {cap} vertices, got {n}")]
    TooLargeForDense { n: usize, cap: usize },
    #[error("graph has {components} connected components; expected a connected graph")]
    Disconnected { components: usize },
    #[error("operation needs at least {needed} vertices, graph has {n}")]
    TooFewVertices { n: usize, needed: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("malformed edge list: {0}")]
    Parse(String),
}

/// Weighted undirected graph over dense vertex ids `0..n`.
///
/// Adjacency lists are sorted by neighbor and hold each undirected edge on
/// both endpoints with the same weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EdgeListRepr", into = "EdgeListRepr")]
pub struct SparseGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

#[derive(Serialize, Deserialize)]
struct EdgeListRepr {
    n_vertices: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl TryFrom<EdgeListRepr> for SparseGraph {
    type Error = GraphError;

    fn try_from(repr: EdgeListRepr) -> Result<Self, Self::Error> {
        build_graph(repr.n_vertices, &repr.edges)
    }
}

impl From<SparseGraph> for EdgeListRepr {
    fn from(g: SparseGraph) -> Self {
        Self {
            n_vertices: g.n_vertices(),
            edges: g.edges().collect(),
        }
    }
}

/// Builds a symmetric graph from an undirected edge list.
///
/// Each edge may be listed once or in both directions; repeated entries must
/// agree to within [`DUPLICATE_EDGE_TOL`] and are merged.
pub fn build_graph(n_vertices: usize, edges: &[(usize, usize, f64)]) -> Result<SparseGraph, GraphError> {
    let mut canonical: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len());
    for &(i, j, w) in edges {
        for index in [i, j] {
            if index >= n_vertices {
                return Err(GraphError::IndexOutOfRange { index, n: n_vertices });
            }
        }
        if !w.is_finite() || w < 0.0 {
            return Err(GraphError::InvalidWeight { i, j, w });
        }
        if i == j {
            return Err(GraphError::SelfLoop(i));
        }
        canonical.push((i.min(j), i.max(j), w));
    }
    canonical.sort_by_key(|e| (e.0, e.1));

    let mut adjacency = vec![Vec::new(); n_vertices];
    let mut idx = 0;
    while idx < canonical.len() {
        let (i, j, w) = canonical[idx];
        let mut next = idx + 1;
        while next < canonical.len() && canonical[next].0 == i && canonical[next].1 == j {
            let other = canonical[next].2;
            if other != w && (other - w).abs() > DUPLICATE_EDGE_TOL * w.abs().max(1.0) {
                return Err(GraphError::ConflictingDuplicate {
                    i,
                    j,
                    first: w,
                    second: other,
                });
            }
            next += 1;
        }
        adjacency[i].push((j, w));
        adjacency[j].push((i, w));
        idx = next;
    }
    for list in &mut adjacency {
        list.sort_by_key(|&(j, _)| j);
    }
    Ok(SparseGraph { adjacency })
}

impl SparseGraph {
    pub fn empty(n_vertices: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); n_vertices],
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.adjacency.len()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    /// Weighted degree `D_ii`.
    pub fn degree(&self, i: usize) -> f64 {
        self.adjacency[i].iter().map(|&(_, w)| w).sum()
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n_vertices()).map(|i| self.degree(i)).collect()
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .ok()
            .map(|pos| self.adjacency[i][pos].1)
    }

    /// Each undirected edge once, as `(i, j, w)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(i, list)| {
            list.iter()
                .filter(move |&&(j, _)| j > i)
                .map(move |&(j, w)| (i, j, w))
        })
    }

    /// Weighted adjacency matrix `A`.
    pub fn adjacency_matrix(&self) -> CsrMatrix<f64> {
        let triplets: Vec<_> = self
            .adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().map(move |&(j, w)| (i, j, w)))
            .collect();
        CsrMatrix::from_triplets(self.n_vertices(), &triplets)
    }

    /// Connected-component label per vertex, labels numbered in order of the
    /// lowest vertex they contain.
    pub fn component_labels(&self) -> (usize, Vec<usize>) {
        let n = self.n_vertices();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &(u, _) in &self.adjacency[v] {
                    if label[u] == usize::MAX {
                        label[u] = count;
                        stack.push(u);
                    }
                }
            }
            count += 1;
        }
        (count, label)
    }

    pub fn is_connected(&self) -> bool {
        self.n_vertices() > 0 && self.component_labels().0 == 1
    }

    /// Subgraph induced by `vertices` (in the given order). Returned graph
    /// vertex `k` corresponds to `vertices[k]`.
    pub fn induced_subgraph(&self, vertices: &[usize]) -> SparseGraph {
        let mut local = vec![usize::MAX; self.n_vertices()];
        for (k, &v) in vertices.iter().enumerate() {
            local[v] = k;
        }
        let adjacency = vertices
            .iter()
            .map(|&v| {
                let mut list: Vec<(usize, f64)> = self.adjacency[v]
                    .iter()
                    .filter(|&&(u, _)| local[u] != usize::MAX)
                    .map(|&(u, w)| (local[u], w))
                    .collect();
                list.sort_by_key(|&(u, _)| u);
                list
            })
            .collect();
        SparseGraph { adjacency }
    }

    /// Same topology with every weight replaced by `f(i, j, w)`.
    pub fn map_weights(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Result<SparseGraph, GraphError> {
        let edges: Vec<_> = self.edges().map(|(i, j, w)| (i, j, f(i, j, w))).collect();
        build_graph(self.n_vertices(), &edges)
    }
}

/// A multi-component graph assembled from independent graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiagonal {
    pub graph: SparseGraph,
    /// Input graph index for every vertex of `graph`.
    pub component_of: Vec<usize>,
    /// First vertex of each input graph; `offsets.len() == inputs + 1`.
    pub offsets: Vec<usize>,
}

/// Places graphs side by side with accumulated vertex offsets and no
/// cross-component edges.
pub fn block_diagonalize(graphs: &[SparseGraph]) -> Result<BlockDiagonal, GraphError> {
    if graphs.is_empty() {
        return Err(GraphError::EmptyGraphList);
    }
    let mut offsets = vec![0];
    let mut adjacency = Vec::new();
    let mut component_of = Vec::new();
    for (c, g) in graphs.iter().enumerate() {
        let base = *offsets.last().unwrap();
        for list in &g.adjacency {
            adjacency.push(list.iter().map(|&(j, w)| (j + base, w)).collect());
            component_of.push(c);
        }
        offsets.push(base + g.n_vertices());
    }
    Ok(BlockDiagonal {
        graph: SparseGraph { adjacency },
        component_of,
        offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_has_unit_degrees() {
        let g = build_graph(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(g.degrees(), vec![1.0, 1.0]);
        assert_eq!(g.n_edges(), 1);
    }

    #[test]
    fn edgeless_graph() {
        let g = build_graph(3, &[]).unwrap();
        assert_eq!(g.degrees(), vec![0.0; 3]);
        assert_eq!(g.component_labels().0, 3);
    }

    #[test]
    fn conflicting_duplicate_is_rejected() {
        let err = build_graph(2, &[(0, 1, 1.0), (1, 0, 2.0)]).unwrap_err();
        assert!(matches!(err, GraphError::ConflictingDuplicate { .. }));
    }

    #[test]
    fn consistent_duplicates_are_merged() {
        let g = build_graph(2, &[(0, 1, 0.5), (1, 0, 0.5), (0, 1, 0.5)]).unwrap();
        assert_eq!(g.n_edges(), 1);
        assert_eq!(g.weight(1, 0), Some(0.5));
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            build_graph(2, &[(0, 2, 1.0)]),
            Err(GraphError::IndexOutOfRange { index: 2, n: 2 })
        ));
        assert!(matches!(
            build_graph(2, &[(0, 1, -1.0)]),
            Err(GraphError::InvalidWeight { .. })
        ));
        assert!(matches!(build_graph(2, &[(1, 1, 1.0)]), Err(GraphError::SelfLoop(1))));
        assert!(matches!(
            build_graph(2, &[(0, 1, f64::NAN)]),
            Err(GraphError::InvalidWeight { .. })
        ));
    }

    #[test]
    fn block_diagonal_of_two_edges() {
        let k2 = build_graph(2, &[(0, 1, 1.0)]).unwrap();
        let bd = block_diagonalize(&[k2.clone(), k2]).unwrap();
        let edges: Vec<_> = bd.graph.edges().collect();
        assert_eq!(edges, vec![(0, 1, 1.0), (2, 3, 1.0)]);
        assert_eq!(bd.component_of, vec![0, 0, 1, 1]);
        assert_eq!(bd.offsets, vec![0, 2, 4]);
    }

    #[test]
    fn block_diagonal_singleton_is_identity() {
        let tri = build_graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let bd = block_diagonalize(std::slice::from_ref(&tri)).unwrap();
        assert_eq!(bd.graph, tri);
        assert!(matches!(block_diagonalize(&[]), Err(GraphError::EmptyGraphList)));
    }

    #[test]
    fn serde_round_trip_is_exact() {
        let g = build_graph(3, &[(0, 1, 0.1 + 0.2), (1, 2, 1.0 / 3.0)]).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        let back: SparseGraph = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
    }
}
