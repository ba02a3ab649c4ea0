//! Random instance generators shared by tests, benchmarks and the
//! acceptance suite.

use rand::Rng;

use crate::graph::{build_graph, SparseGraph};
use crate::mesh::{icosphere, TriangleMesh};

/// Erdős–Rényi-style graph with edge probability `p` and weights drawn
/// uniformly from `[0.1, 2.0)`. May be disconnected.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, p: f64) -> SparseGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j, rng.random_range(0.1..2.0)));
            }
        }
    }
    build_graph(n, &edges).expect("generated edges are valid")
}

/// Random connected graph: a random spanning tree plus extra edges.
pub fn random_connected_graph<R: Rng>(rng: &mut R, n: usize, extra_p: f64) -> SparseGraph {
    let mut edges = Vec::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        edges.push((j, i, rng.random_range(0.1..2.0)));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < extra_p && !edges.iter().any(|&(a, b, _)| a == i && b == j) {
                edges.push((i, j, rng.random_range(0.1..2.0)));
            }
        }
    }
    build_graph(n, &edges).expect("generated edges are valid")
}

/// Icosphere with random radius and per-vertex radial jitter.
pub fn random_icosphere<R: Rng>(rng: &mut R, subdivisions: u32) -> TriangleMesh {
    let radius = rng.random_range(8.0..20.0);
    let base = icosphere(subdivisions, radius);
    let vertices = base
        .vertices()
        .iter()
        .map(|p| {
            let s = 1.0 + rng.random_range(-0.05..0.05);
            [p[0] * s, p[1] * s, p[2] * s]
        })
        .collect();
    base.with_vertices(vertices).expect("radial jitter keeps the mesh valid")
}

/// Uniform values in `[-1, 1)`.
pub fn random_vec<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}
