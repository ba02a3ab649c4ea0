//! Triangle meshes, their weighted graphs, and the binary partition tree
//! used for pooling.

mod geodesic;
mod hierarchy;
pub mod io;
mod partition;
mod primitives;

pub use geodesic::{geodesic_distance, geodesic_distances_from};
pub use hierarchy::{
    build_hierarchy, pooling_groups, upsample_to_finest, HierarchyLevel, HierarchyOptions,
    MeshHierarchy, PartitionAssignment, PoolingGroup,
};
pub use partition::bipartition;
pub use primitives::icosphere;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_graph, GraphError, SparseGraph};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("face {face} references vertex {vertex}, mesh has {n} vertices")]
    FaceIndexOutOfRange { face: usize, vertex: usize, n: usize },
    #[error("face {0} repeats a vertex")]
    DegenerateFace(usize),
    #[error("vertex {0} has a non-finite coordinate")]
    NonFiniteVertex(usize),
    #[error("zero-length edge between vertices {0} and {1}")]
    ZeroLengthEdge(usize, usize),
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("mesh edge graph has {0} connected components; split it before use")]
    Disconnected(usize),
    #[error("vertex {dst} is unreachable from vertex {src}")]
    Unreachable { src: usize, dst: usize },
    #[error("vertex {index} out of range ({n} vertices)")]
    VertexOutOfRange { index: usize, n: usize },
    #[error("partition {partition} at level {level} has a single vertex and cannot be split; increase stop_distance or lower max_depth")]
    SingletonPartition { level: usize, partition: usize },
    #[error("invalid hierarchy request: {0}")]
    InvalidRequest(String),
    #[error("hierarchies have different depths ({0} vs {1}); composition requires equal depth")]
    DepthMismatch(usize, usize),
    #[error("mesh parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Triangulated surface: vertex positions and triangular faces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Validates face indices and coordinates. Connectivity is checked
    /// separately by [`TriangleMesh::ensure_connected`].
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let n = vertices.len();
        if let Some(i) = vertices.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(MeshError::NonFiniteVertex(i));
        }
        for (f, face) in faces.iter().enumerate() {
            if let Some(&vertex) = face.iter().find(|&&v| v >= n) {
                return Err(MeshError::FaceIndexOutOfRange { face: f, vertex, n });
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(MeshError::DegenerateFace(f));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Same topology, new positions.
    pub fn with_vertices(&self, vertices: Vec<[f64; 3]>) -> Result<Self, MeshError> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::InvalidRequest(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Self::new(vertices, self.faces.clone())
    }

    /// Unique undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut set = BTreeSet::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.into_iter().collect()
    }

    pub fn edge_length(&self, i: usize, j: usize) -> f64 {
        distance(&self.vertices[i], &self.vertices[j])
    }

    /// Graph whose weights are Euclidean edge lengths; the metric used for
    /// geodesics along the surface.
    pub fn length_graph(&self) -> Result<SparseGraph, MeshError> {
        let mut edges = Vec::new();
        for (i, j) in self.edges() {
            let len = self.edge_length(i, j);
            if len == 0.0 {
                return Err(MeshError::ZeroLengthEdge(i, j));
            }
            edges.push((i, j, len));
        }
        Ok(build_graph(self.n_vertices(), &edges)?)
    }

    pub fn ensure_connected(&self) -> Result<(), MeshError> {
        let topo = build_graph(
            self.n_vertices(),
            &self.edges().into_iter().map(|(i, j)| (i, j, 1.0)).collect::<Vec<_>>(),
        )?;
        let (count, _) = topo.component_labels();
        if count != 1 {
            return Err(MeshError::Disconnected(count));
        }
        Ok(())
    }

    /// Splits the mesh into its connected components, each re-indexed from
    /// zero. Vertices not referenced by any face form their own components
    /// and are dropped.
    pub fn split_components(&self) -> Vec<TriangleMesh> {
        let topo = build_graph(
            self.n_vertices(),
            &self.edges().into_iter().map(|(i, j)| (i, j, 1.0)).collect::<Vec<_>>(),
        )
        .expect("edges come from validated faces");
        let (count, labels) = topo.component_labels();
        let mut out = Vec::new();
        for c in 0..count {
            let members: Vec<usize> = (0..self.n_vertices()).filter(|&v| labels[v] == c).collect();
            let faces: Vec<[usize; 3]> = self
                .faces
                .iter()
                .filter(|f| labels[f[0]] == c)
                .copied()
                .collect();
            if faces.is_empty() {
                continue;
            }
            let mut local = vec![usize::MAX; self.n_vertices()];
            for (k, &v) in members.iter().enumerate() {
                local[v] = k;
            }
            out.push(TriangleMesh {
                vertices: members.iter().map(|&v| self.vertices[v]).collect(),
                faces: faces
                    .iter()
                    .map(|f| [local[f[0]], local[f[1]], local[f[2]]])
                    .collect(),
            });
        }
        out
    }
}

pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Gaussian kernel on a geodesic distance:
/// `e = exp(-(psi / sigma)^2 / 2) / (sigma * sqrt(2 pi))`.
pub fn gaussian_edge_weight(psi: f64, sigma: f64) -> f64 {
    let z = psi / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// One vertex per mesh vertex and one edge per mesh edge, weighted by the
/// Gaussian kernel of the edge length.
pub fn mesh_to_graph(mesh: &TriangleMesh, sigma: f64) -> Result<SparseGraph, MeshError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(MeshError::InvalidSigma(sigma));
    }
    let lengths = mesh.length_graph()?;
    Ok(lengths.map_weights(|_, _, len| gaussian_edge_weight(len, sigma))?)
}
