use std::path::Path;

use serde::{Deserialize, Serialize};

use super::synthetic::SyntheticSpec;
use super::HarnessError;
use crate::mesh::io::{load_mesh, save_mesh};
use crate::mesh::{MeshHierarchy, TriangleMesh};
use crate::nn::SampleSet;

const FORMAT: &str = "resgcn-dataset";
const VERSION: u32 = 1;
pub(crate) const MANIFEST_FILE: &str = "manifest.json";

/// One registered surface structure. Every scan of the structure shares
/// the template's triangulation and vertex order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureInfo {
    pub name: String,
    pub template_file: String,
    pub n_vertices: usize,
    /// Surfaces per scan (e.g. white and gray matter); 3 features each.
    pub surfaces: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub scan_id: String,
    pub label: u8,
    /// Mesh files, structure-major then surface, relative to the dataset
    /// directory.
    pub mesh_files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub structures: Vec<StructureInfo>,
    pub hierarchy_file: String,
    pub records: Vec<SubjectRecord>,
    /// Template vertices of the first structure that carry the class
    /// signal, when known.
    #[serde(default)]
    pub patch_vertices: Vec<usize>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

impl DatasetManifest {
    pub fn new(structures: Vec<StructureInfo>, records: Vec<SubjectRecord>) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            structures,
            hierarchy_file: "hierarchy.json".to_string(),
            records,
            patch_vertices: Vec::new(),
            synthetic: None,
        }
    }

    pub fn n_features(&self) -> usize {
        self.structures.iter().map(|s| 3 * s.surfaces).sum()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }
}

/// Scans ready for the network: raw (unnormalized) finest-level features.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub hierarchy: MeshHierarchy,
    pub samples: SampleSet,
    /// Padding entries of the block-diagonal feature layout, when the
    /// dataset has more than one structure.
    pub mask: Option<Vec<bool>>,
}

fn structure_offsets(structures: &[StructureInfo]) -> (Vec<usize>, Vec<usize>) {
    let mut mesh = vec![0];
    let mut cols = vec![0];
    for s in structures {
        mesh.push(mesh.last().unwrap() + s.n_vertices);
        cols.push(cols.last().unwrap() + 3 * s.surfaces);
    }
    (mesh, cols)
}

/// Node features of one scan: the coordinates of every finest partition
/// center on each surface of its structure. Structures occupy disjoint
/// column blocks. `surfaces` lists vertex arrays structure-major.
pub fn node_features(
    h: &MeshHierarchy,
    structures: &[StructureInfo],
    surfaces: &[&[[f64; 3]]],
) -> Result<Vec<f64>, HarnessError> {
    let expected: usize = structures.iter().map(|s| s.surfaces).sum();
    if surfaces.len() != expected {
        return Err(HarnessError::Dataset(format!("expected {expected} surfaces, got {}", surfaces.len())));
    }
    let (mesh_off, col_off) = structure_offsets(structures);
    if h.n_mesh_vertices() != *mesh_off.last().unwrap() {
        return Err(HarnessError::Dataset("hierarchy does not cover the structures' vertices".into()));
    }
    let nf = *col_off.last().unwrap();
    let centers = &h.finest().centers;
    let mut out = vec![0.0; centers.len() * nf];
    let mut first_surface = 0;
    for (s, info) in structures.iter().enumerate() {
        for k in 0..info.surfaces {
            let verts = surfaces[first_surface + k];
            if verts.len() != info.n_vertices {
                return Err(HarnessError::Dataset(format!(
                    "structure {} surface {k} has {} vertices, expected {}",
                    info.name,
                    verts.len(),
                    info.n_vertices
                )));
            }
            for (node, &c) in centers.iter().enumerate() {
                if (mesh_off[s]..mesh_off[s + 1]).contains(&c) {
                    let p = verts[c - mesh_off[s]];
                    let at = node * nf + col_off[s] + 3 * k;
                    out[at..at + 3].copy_from_slice(&p);
                }
            }
        }
        first_surface += info.surfaces;
    }
    Ok(out)
}

/// Padding mask of the block-diagonal layout; `None` for one structure.
pub(crate) fn padding_mask(h: &MeshHierarchy, structures: &[StructureInfo]) -> Option<Vec<bool>> {
    if structures.len() < 2 {
        return None;
    }
    let (mesh_off, col_off) = structure_offsets(structures);
    let nf = *col_off.last().unwrap();
    let mut mask = Vec::with_capacity(h.finest().centers.len() * nf);
    for &c in &h.finest().centers {
        let s = mesh_off.partition_point(|&o| o <= c) - 1;
        mask.extend((0..nf).map(|f| !(col_off[s]..col_off[s + 1]).contains(&f)));
    }
    Some(mask)
}

impl Dataset {
    pub fn from_features(
        manifest: DatasetManifest,
        hierarchy: MeshHierarchy,
        features: Vec<Vec<f64>>,
    ) -> Result<Self, HarnessError> {
        if features.len() != manifest.records.len() {
            return Err(HarnessError::Dataset("one feature matrix per record is required".into()));
        }
        if let Some(&bad) = manifest.records.iter().map(|r| &r.label).find(|&&l| l > 1) {
            return Err(HarnessError::Dataset(format!("label {bad} is not 0 or 1")));
        }
        let n_nodes = hierarchy.finest().n_partitions();
        let n_features = manifest.n_features();
        if features.iter().any(|f| f.len() != n_nodes * n_features) {
            return Err(HarnessError::Dataset("feature matrix shape does not match the hierarchy".into()));
        }
        let mask = padding_mask(&hierarchy, &manifest.structures);
        let samples = SampleSet {
            n_nodes,
            n_features,
            features,
            labels: manifest.labels(),
        };
        Ok(Self {
            manifest,
            hierarchy,
            samples,
            mask,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Reads the manifest, hierarchy and every scan mesh of a dataset
    /// directory.
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let manifest: DatasetManifest = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.format != FORMAT || manifest.version != VERSION {
            return Err(HarnessError::Dataset(format!(
                "unsupported manifest {} v{}",
                manifest.format, manifest.version
            )));
        }
        let hierarchy = MeshHierarchy::from_json(&std::fs::read_to_string(dir.join(&manifest.hierarchy_file))?)?;
        let features = manifest
            .records
            .iter()
            .map(|r| {
                let meshes = r
                    .mesh_files
                    .iter()
                    .map(|f| load_mesh(&dir.join(f)))
                    .collect::<Result<Vec<_>, _>>()?;
                let verts: Vec<&[[f64; 3]]> = meshes.iter().map(|m| m.vertices()).collect();
                node_features(&hierarchy, &manifest.structures, &verts)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_features(manifest, hierarchy, features)
    }
}

/// Writes the manifest, hierarchy, templates and scan meshes. `scans`
/// holds vertex arrays per record, structure-major.
pub(crate) fn save_dataset(
    dir: &Path,
    manifest: &DatasetManifest,
    hierarchy: &MeshHierarchy,
    templates: &[TriangleMesh],
    scans: &[Vec<Vec<[f64; 3]>>],
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(manifest)?)?;
    std::fs::write(dir.join(&manifest.hierarchy_file), hierarchy.to_json()?)?;
    for (info, t) in manifest.structures.iter().zip(templates) {
        write_file(dir, &info.template_file, t)?;
    }
    for (record, verts) in manifest.records.iter().zip(scans) {
        let mut k = 0;
        for (info, t) in manifest.structures.iter().zip(templates) {
            for _ in 0..info.surfaces {
                let mesh = t.with_vertices(verts[k].clone())?;
                write_file(dir, &record.mesh_files[k], &mesh)?;
                k += 1;
            }
        }
    }
    Ok(())
}

fn write_file(dir: &Path, rel: &str, mesh: &TriangleMesh) -> Result<(), HarnessError> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_mesh(mesh, &path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_hierarchy, icosphere, HierarchyOptions};

    fn two_structures() -> (MeshHierarchy, Vec<StructureInfo>, TriangleMesh, TriangleMesh) {
        let a = icosphere(1, 5.0);
        let b = icosphere(1, 3.0);
        let opts = HierarchyOptions {
            sigma: 2.0,
            stop_distance: f64::MIN_POSITIVE,
            max_depth: 2,
        };
        let h = MeshHierarchy::compose(&[build_hierarchy(&a, &opts).unwrap(), build_hierarchy(&b, &opts).unwrap()])
            .unwrap();
        let info = vec![
            StructureInfo {
                name: "a".into(),
                template_file: "a.off".into(),
                n_vertices: a.n_vertices(),
                surfaces: 2,
            },
            StructureInfo {
                name: "b".into(),
                template_file: "b.off".into(),
                n_vertices: b.n_vertices(),
                surfaces: 1,
            },
        ];
        (h, info, a, b)
    }

    #[test]
    fn block_layout_places_each_structure_in_its_columns() {
        let (h, info, a, b) = two_structures();
        let inner: Vec<[f64; 3]> = a.vertices().iter().map(|p| p.map(|c| c * 0.5)).collect();
        let x = node_features(&h, &info, &[a.vertices(), &inner, b.vertices()]).unwrap();
        let mask = padding_mask(&h, &info).unwrap();
        assert_eq!(x.len(), 8 * 9);
        for (node, &c) in h.finest().centers.iter().enumerate() {
            let row = &x[node * 9..node * 9 + 9];
            let m = &mask[node * 9..node * 9 + 9];
            if node < 4 {
                assert_eq!(&row[0..3], &a.vertices()[c]);
                assert_eq!(&row[3..6], &inner[c]);
                assert_eq!(&row[6..], &[0.0; 3]);
                assert_eq!(m, &[false, false, false, false, false, false, true, true, true]);
            } else {
                assert_eq!(&row[..6], &[0.0; 6]);
                assert_eq!(&row[6..], &b.vertices()[c - a.n_vertices()]);
                assert_eq!(m, &[true, true, true, true, true, true, false, false, false]);
            }
        }
    }

    #[test]
    fn surface_count_is_checked() {
        let (h, info, a, _) = two_structures();
        assert!(node_features(&h, &info, &[a.vertices()]).is_err());
    }
}
