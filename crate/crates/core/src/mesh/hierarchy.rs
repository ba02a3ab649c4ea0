//! Uniform-depth binary partition tree over a mesh.
//!
//! Level 0 holds the root partition(s); every round splits all partitions of
//! the current level in two, so level `l` has `roots * 2^l` partitions and
//! partitions `2i` and `2i + 1` share parent `i`. Each level carries a graph
//! whose vertices are the partition centers and whose edges join neighboring
//! partitions, weighted by the Gaussian kernel of the center-to-center
//! geodesic distance.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bipartition, gaussian_edge_weight, geodesic_distances_from, mesh_to_graph, MeshError, TriangleMesh};
use crate::graph::{block_diagonalize, build_graph, SparseGraph};

const FORMAT: &str = "resgcn-hierarchy";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyOptions {
    /// Kernel width (mm) for edge weights.
    pub sigma: f64,
    /// Stop once the mean center distance between neighboring partitions
    /// drops below this value (mm).
    pub stop_distance: f64,
    /// Deepest level that may be produced.
    pub max_depth: usize,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        Self {
            sigma: 2.0,
            stop_distance: 2.5,
            max_depth: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyLevel {
    /// Partition graph with Gaussian-kernel weights.
    pub graph: SparseGraph,
    /// Mesh vertex at the center of each partition.
    pub centers: Vec<usize>,
    /// Parent partition at the previous level (empty at level 0).
    pub parents: Vec<usize>,
    /// Geodesic center distance for every neighboring pair `(i, j)`, `i < j`.
    pub center_distances: Vec<(usize, usize, f64)>,
    /// Uniform mean of `center_distances`, if the level has neighbors.
    pub mean_neighbor_distance: Option<f64>,
}

impl HierarchyLevel {
    pub fn n_partitions(&self) -> usize {
        self.centers.len()
    }
}

/// Binary partition tree with one graph per level. Levels run from the
/// root side (0) to the finest level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HierarchyFile", into = "HierarchyFile")]
pub struct MeshHierarchy {
    sigma: f64,
    stop_distance: f64,
    roots: usize,
    levels: Vec<HierarchyLevel>,
    membership: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct HierarchyFile {
    format: String,
    version: u32,
    sigma: f64,
    stop_distance: f64,
    roots: usize,
    /// Finest partition of every mesh vertex.
    membership: Vec<usize>,
    levels: Vec<HierarchyLevel>,
}

impl From<MeshHierarchy> for HierarchyFile {
    fn from(h: MeshHierarchy) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            sigma: h.sigma,
            stop_distance: h.stop_distance,
            roots: h.roots,
            membership: h.membership,
            levels: h.levels,
        }
    }
}

impl TryFrom<HierarchyFile> for MeshHierarchy {
    type Error = MeshError;

    fn try_from(f: HierarchyFile) -> Result<Self, Self::Error> {
        if f.format != FORMAT || f.version != VERSION {
            return Err(MeshError::InvalidRequest(format!(
                "unsupported hierarchy file {} v{}",
                f.format, f.version
            )));
        }
        let h = MeshHierarchy {
            sigma: f.sigma,
            stop_distance: f.stop_distance,
            roots: f.roots,
            levels: f.levels,
            membership: f.membership,
        };
        h.validate()?;
        Ok(h)
    }
}

/// Mesh-vertex partition ids at one level.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionAssignment {
    pub level: usize,
    pub membership: Vec<usize>,
}

/// A parent partition and its two children one level down.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolingGroup {
    pub parent: usize,
    pub children: [usize; 2],
}

impl MeshHierarchy {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn stop_distance(&self) -> f64 {
        self.stop_distance
    }

    /// Number of independent trees (1 unless hierarchies were composed).
    pub fn roots(&self) -> usize {
        self.roots
    }

    /// Index of the finest level.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[HierarchyLevel] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> &HierarchyLevel {
        &self.levels[l]
    }

    pub fn level_size(&self, l: usize) -> usize {
        self.roots << l
    }

    pub fn finest(&self) -> &HierarchyLevel {
        self.levels.last().expect("hierarchy has at least one level")
    }

    pub fn n_mesh_vertices(&self) -> usize {
        self.membership.len()
    }

    /// Finest-level partition of every mesh vertex.
    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    pub fn parent_map(&self, l: usize) -> &[usize] {
        &self.levels[l].parents
    }

    /// Partition of every mesh vertex at level `l`.
    pub fn assignment(&self, l: usize) -> Result<PartitionAssignment, MeshError> {
        let depth = self.depth();
        if l > depth {
            return Err(MeshError::InvalidRequest(format!("level {l} exceeds depth {depth}")));
        }
        Ok(PartitionAssignment {
            level: l,
            membership: self.membership.iter().map(|&p| p >> (depth - l)).collect(),
        })
    }

    /// Spreads finest-level values to the mesh vertices of each partition.
    pub fn project_to_mesh(&self, finest_values: &[f64]) -> Result<Vec<f64>, MeshError> {
        let n = self.level_size(self.depth());
        if finest_values.len() != n {
            return Err(MeshError::InvalidRequest(format!(
                "expected {n} finest-level values, got {}",
                finest_values.len()
            )));
        }
        Ok(self.membership.iter().map(|&p| finest_values[p]).collect())
    }

    /// Checks level sizes, the 2-to-1 parent numbering, membership and
    /// center ranges.
    pub fn validate(&self) -> Result<(), MeshError> {
        let bad = |m: String| Err(MeshError::InvalidRequest(m));
        if self.levels.is_empty() || self.roots == 0 {
            return bad("hierarchy has no levels".into());
        }
        let n_mesh = self.membership.len();
        for (l, level) in self.levels.iter().enumerate() {
            let size = self.level_size(l);
            if level.centers.len() != size || level.graph.n_vertices() != size {
                return bad(format!("level {l} should have {size} partitions"));
            }
            if level.centers.iter().any(|&c| c >= n_mesh) {
                return bad(format!("level {l} has a center outside the mesh"));
            }
            let expected: Vec<usize> = if l == 0 { Vec::new() } else { (0..size).map(|j| j / 2).collect() };
            if level.parents != expected {
                return bad(format!("level {l} parent map breaks the 2i/2i+1 numbering"));
            }
        }
        let finest = self.level_size(self.depth());
        if self.membership.iter().any(|&p| p >= finest) {
            return bad("membership refers to a missing finest partition".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Places independent hierarchies side by side, level by level. Tree
    /// `s` keeps the 2i/2i+1 numbering after offsetting by the sizes of the
    /// preceding trees, so pooling works across the composite unchanged.
    pub fn compose(parts: &[MeshHierarchy]) -> Result<MeshHierarchy, MeshError> {
        let first = parts
            .first()
            .ok_or_else(|| MeshError::InvalidRequest("no hierarchies to compose".into()))?;
        for h in &parts[1..] {
            if h.depth() != first.depth() {
                return Err(MeshError::DepthMismatch(first.depth(), h.depth()));
            }
            if h.sigma != first.sigma {
                return Err(MeshError::InvalidRequest("composed hierarchies must share sigma".into()));
            }
        }
        let depth = first.depth();
        let roots: usize = parts.iter().map(|h| h.roots).sum();
        let mut levels = Vec::with_capacity(depth + 1);
        for l in 0..=depth {
            let graphs: Vec<SparseGraph> = parts.iter().map(|h| h.levels[l].graph.clone()).collect();
            let graph = block_diagonalize(&graphs)?.graph;
            let mut centers = Vec::new();
            let mut center_distances = Vec::new();
            let (mut node_off, mut mesh_off) = (0, 0);
            for h in parts {
                let lev = &h.levels[l];
                centers.extend(lev.centers.iter().map(|&c| c + mesh_off));
                center_distances.extend(
                    lev.center_distances
                        .iter()
                        .map(|&(i, j, d)| (i + node_off, j + node_off, d)),
                );
                node_off += lev.n_partitions();
                mesh_off += h.n_mesh_vertices();
            }
            let size = roots << l;
            levels.push(HierarchyLevel {
                graph,
                centers,
                parents: if l == 0 { Vec::new() } else { (0..size).map(|j| j / 2).collect() },
                mean_neighbor_distance: mean(&center_distances),
                center_distances,
            });
        }
        let mut membership = Vec::new();
        let mut part_off = 0;
        for h in parts {
            membership.extend(h.membership.iter().map(|&p| p + part_off));
            part_off += h.level_size(depth);
        }
        let out = MeshHierarchy {
            sigma: first.sigma,
            stop_distance: first.stop_distance,
            roots,
            levels,
            membership,
        };
        out.validate()?;
        Ok(out)
    }
}

fn mean(pairs: &[(usize, usize, f64)]) -> Option<f64> {
    if pairs.is_empty() {
        None
    } else {
        Some(pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64)
    }
}

/// Vertex of the partition with the smallest summed geodesic distance to the
/// rest of the partition (highest closeness centrality), measured inside the
/// partition. Ties go to the lowest vertex index.
fn partition_center(lengths: &SparseGraph, members: &[usize]) -> usize {
    if members.len() == 1 {
        return members[0];
    }
    let sub = lengths.induced_subgraph(members);
    let totals: Vec<f64> = (0..members.len())
        .into_par_iter()
        .map(|s| geodesic_distances_from(&sub, s).iter().sum())
        .collect();
    let mut best = 0;
    for k in 1..members.len() {
        if totals[k] < totals[best] {
            best = k;
        }
    }
    members[best]
}

fn build_level(
    lengths: &SparseGraph,
    partitions: &[Vec<usize>],
    sigma: f64,
    parents: Vec<usize>,
) -> Result<(HierarchyLevel, Vec<usize>), MeshError> {
    let n_mesh = lengths.n_vertices();
    let mut membership = vec![usize::MAX; n_mesh];
    for (p, members) in partitions.iter().enumerate() {
        for &v in members {
            membership[v] = p;
        }
    }
    let centers: Vec<usize> = partitions
        .par_iter()
        .map(|members| partition_center(lengths, members))
        .collect();

    let mut neighbor_pairs = BTreeSet::new();
    for (i, j, _) in lengths.edges() {
        let (a, b) = (membership[i], membership[j]);
        if a != b {
            neighbor_pairs.insert((a.min(b), a.max(b)));
        }
    }
    let mut sources: Vec<usize> = neighbor_pairs.iter().map(|&(a, _)| a).collect();
    sources.dedup();
    let distance_rows: Vec<(usize, Vec<f64>)> = sources
        .par_iter()
        .map(|&a| (a, geodesic_distances_from(lengths, centers[a])))
        .collect();
    let row_of = |a: usize| &distance_rows[distance_rows.binary_search_by_key(&a, |r| r.0).unwrap()].1;

    let center_distances: Vec<(usize, usize, f64)> = neighbor_pairs
        .iter()
        .map(|&(a, b)| (a, b, row_of(a)[centers[b]]))
        .collect();
    let edges: Vec<(usize, usize, f64)> = center_distances
        .iter()
        .map(|&(a, b, d)| (a, b, gaussian_edge_weight(d, sigma)))
        .collect();
    let graph = build_graph(partitions.len(), &edges)?;
    Ok((
        HierarchyLevel {
            graph,
            centers,
            parents,
            mean_neighbor_distance: mean(&center_distances),
            center_distances,
        },
        membership,
    ))
}

/// Builds the partition tree of a connected mesh by recursive spectral
/// bipartition of every partition, one level at a time.
///
/// Splitting stops at the first level whose mean neighbor-center distance is
/// below `stop_distance`, or at `max_depth`.
pub fn build_hierarchy(mesh: &TriangleMesh, options: &HierarchyOptions) -> Result<MeshHierarchy, MeshError> {
    if !(options.stop_distance > 0.0) {
        return Err(MeshError::InvalidRequest("stop_distance must be positive".into()));
    }
    mesh.ensure_connected()?;
    let weights = mesh_to_graph(mesh, options.sigma)?;
    let lengths = mesh.length_graph()?;

    let mut partitions: Vec<Vec<usize>> = vec![(0..mesh.n_vertices()).collect()];
    let (root, mut membership) = build_level(&lengths, &partitions, options.sigma, Vec::new())?;
    let mut levels = vec![root];

    loop {
        let depth = levels.len() - 1;
        let current = levels.last().unwrap();
        let reached_stop = depth > 0
            && current
                .mean_neighbor_distance
                .is_some_and(|d| d < options.stop_distance);
        if reached_stop || depth >= options.max_depth {
            break;
        }
        if let Some(p) = partitions.iter().position(|m| m.len() < 2) {
            return Err(MeshError::SingletonPartition { level: depth, partition: p });
        }
        let split: Vec<(Vec<usize>, Vec<usize>)> = partitions
            .par_iter()
            .map(|members| {
                let (a, b) = bipartition(&weights.induced_subgraph(members))?;
                Ok((
                    a.into_iter().map(|k| members[k]).collect(),
                    b.into_iter().map(|k| members[k]).collect(),
                ))
            })
            .collect::<Result<_, MeshError>>()?;
        partitions = split.into_iter().flat_map(|(a, b)| [a, b]).collect();
        let parents = (0..partitions.len()).map(|j| j / 2).collect();
        let (level, m) = build_level(&lengths, &partitions, options.sigma, parents)?;
        levels.push(level);
        membership = m;
    }

    let h = MeshHierarchy {
        sigma: options.sigma,
        stop_distance: options.stop_distance,
        roots: 1,
        levels,
        membership,
    };
    h.validate()?;
    Ok(h)
}

/// Parent/children triples for pooling from level `level` to `level - 1`.
pub fn pooling_groups(h: &MeshHierarchy, level: usize) -> Result<Vec<PoolingGroup>, MeshError> {
    if level == 0 || level > h.depth() {
        return Err(MeshError::InvalidRequest(format!(
            "pooling level must be in 1..={}, got {level}",
            h.depth()
        )));
    }
    Ok((0..h.level_size(level - 1))
        .map(|parent| PoolingGroup {
            parent,
            children: [2 * parent, 2 * parent + 1],
        })
        .collect())
}

/// Copies per-partition values at `level` down the tree: every finest-level
/// partition receives the value of its ancestor.
pub fn upsample_to_finest(h: &MeshHierarchy, values: &[f64], level: usize) -> Result<Vec<f64>, MeshError> {
    let depth = h.depth();
    if level > depth {
        return Err(MeshError::InvalidRequest(format!("level {level} exceeds depth {depth}")));
    }
    let expected = h.level_size(level);
    if values.len() != expected {
        return Err(MeshError::InvalidRequest(format!(
            "expected {expected} values at level {level}, got {}",
            values.len()
        )));
    }
    Ok((0..h.level_size(depth)).map(|j| values[j >> (depth - level)]).collect())
}
