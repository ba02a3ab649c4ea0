use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::MeshError;
use crate::graph::SparseGraph;

#[derive(Copy, Clone, PartialEq)]
struct Entry {
    dist: f64,
    vertex: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance, ties on vertex id for a stable pop order.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest path lengths (Dijkstra). Edge weights are read as
/// lengths. Unreachable vertices get `f64::INFINITY`.
pub fn geodesic_distances_from(g: &SparseGraph, src: usize) -> Vec<f64> {
    let n = g.n_vertices();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Entry { dist: 0.0, vertex: src });
    while let Some(Entry { dist: d, vertex: v }) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(u, w) in g.neighbors(v) {
            let nd = d + w;
            if nd < dist[u] {
                dist[u] = nd;
                heap.push(Entry { dist: nd, vertex: u });
            }
        }
    }
    dist
}

/// Shortest-path length between two vertices of a length-weighted graph.
/// The search starts from the lower index, so the result is exactly
/// symmetric in its arguments.
pub fn geodesic_distance(g: &SparseGraph, src: usize, dst: usize) -> Result<f64, MeshError> {
    let n = g.n_vertices();
    for index in [src, dst] {
        if index >= n {
            return Err(MeshError::VertexOutOfRange { index, n });
        }
    }
    let d = geodesic_distances_from(g, src.min(dst))[src.max(dst)];
    if d.is_finite() {
        Ok(d)
    } else {
        Err(MeshError::Unreachable { src, dst })
    }
}
