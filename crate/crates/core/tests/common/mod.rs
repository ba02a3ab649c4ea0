//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use resgcn_core::graph::SparseGraph;

/// `I - D^{-1/2} A D^{-1/2}` built entry by entry from the edge list.
pub fn dense_laplacian(g: &SparseGraph) -> DMatrix<f64> {
    let n = g.n_vertices();
    let mut a = DMatrix::zeros(n, n);
    for (i, j, w) in g.edges() {
        a[(i, j)] += w;
        a[(j, i)] += w;
    }
    let d: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let off = if d[i] > 0.0 && d[j] > 0.0 { a[(i, j)] / (d[i] * d[j]).sqrt() } else { 0.0 };
        f64::from(u8::from(i == j)) - off
    })
}

pub fn eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(m.clone())
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigen(m).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `U g(2 Lambda / lambda_max - 1) U^T x` with `g = sum_k theta_k T_k`,
/// the polynomial evaluated by its trigonometric form on `[-1, 1]`.
pub fn spectral_filter(lap: &DMatrix<f64>, lambda_max: f64, theta: &[f64], x: &[f64]) -> Vec<f64> {
    let e = eigen(lap);
    let u = &e.eigenvectors;
    let coeffs = u.transpose() * DVector::from_column_slice(x);
    let scaled = DVector::from_iterator(
        x.len(),
        e.eigenvalues.iter().zip(coeffs.iter()).map(|(&lam, &c)| {
            let t = (2.0 * lam / lambda_max - 1.0).clamp(-1.0, 1.0).acos();
            let g: f64 = theta.iter().enumerate().map(|(k, th)| th * (k as f64 * t).cos()).sum();
            g * c
        }),
    );
    (u * scaled).iter().copied().collect()
}

/// All-pairs shortest paths by Floyd-Warshall; edge weights are lengths.
pub fn floyd_warshall(g: &SparseGraph) -> Vec<Vec<f64>> {
    let n = g.n_vertices();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for (i, j, w) in g.edges() {
        d[i][j] = d[i][j].min(w);
        d[j][i] = d[j][i].min(w);
    }
    for k in 0..n {
        let dk = d[k].clone();
        for row in d.iter_mut() {
            let dik = row[k];
            if dik.is_infinite() {
                continue;
            }
            for (dij, &dkj) in row.iter_mut().zip(&dk) {
                let via = dik + dkj;
                if via < *dij {
                    *dij = via;
                }
            }
        }
    }
    d
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Gaussian edge kernel, written out independently of the library.
pub fn kernel(psi: f64, sigma: f64) -> f64 {
    (-(psi * psi) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Largest deviations found by [`audit_hierarchy`].
#[derive(Debug, Default)]
pub struct HierarchyAudit {
    /// Level-graph weight against the kernel of the all-pairs center distance.
    pub weight_error: f64,
    /// Reported mean neighbor-center distance against the recomputed one.
    pub mean_error: f64,
    pub levels: usize,
}

/// Rebuilds every structural fact of a hierarchy from the mesh alone:
/// sizes, parent numbering, nesting, nonempty connected partitions, the
/// neighbor relation, centers inside their partitions, weights and mean
/// distances from Floyd-Warshall geodesics.
pub fn audit_hierarchy(
    mesh: &resgcn_core::mesh::TriangleMesh,
    h: &resgcn_core::mesh::MeshHierarchy,
) -> Result<HierarchyAudit, String> {
    use std::collections::BTreeSet;
    let lengths = mesh.length_graph().map_err(|e| e.to_string())?;
    let dist = floyd_warshall(&lengths);
    let mut audit = HierarchyAudit {
        levels: h.depth() + 1,
        ..Default::default()
    };
    let mut previous: Option<Vec<usize>> = None;
    for l in 0..=h.depth() {
        let level = h.level(l);
        let size = 1usize << l;
        if level.n_partitions() != size || level.graph.n_vertices() != size || level.centers.len() != size {
            return Err(format!("level {l} does not have {size} partitions"));
        }
        let parents = h.parent_map(l);
        let expected: Vec<usize> = if l == 0 { vec![] } else { (0..size).map(|j| j / 2).collect() };
        if parents != expected.as_slice() {
            return Err(format!("level {l} parent map is not 2-to-1"));
        }
        let memb = h.assignment(l).map_err(|e| e.to_string())?.membership;
        let mut parts = vec![Vec::new(); size];
        for (v, &p) in memb.iter().enumerate() {
            parts.get_mut(p).ok_or(format!("level {l}: partition id {p} out of range"))?.push(v);
        }
        for (p, members) in parts.iter().enumerate() {
            if members.is_empty() {
                return Err(format!("level {l}: partition {p} is empty"));
            }
            if !lengths.induced_subgraph(members).is_connected() {
                return Err(format!("level {l}: partition {p} is disconnected"));
            }
            if memb[level.centers[p]] != p {
                return Err(format!("level {l}: center of partition {p} lies outside it"));
            }
        }
        if let Some(prev) = &previous {
            if memb.iter().zip(prev).any(|(&c, &p)| c / 2 != p) {
                return Err(format!("level {l} does not refine level {}", l - 1));
            }
        }
        let neighbors: BTreeSet<(usize, usize)> = mesh
            .edges()
            .into_iter()
            .filter(|&(i, j)| memb[i] != memb[j])
            .map(|(i, j)| (memb[i].min(memb[j]), memb[i].max(memb[j])))
            .collect();
        let graph_pairs: BTreeSet<(usize, usize)> = level.graph.edges().map(|(a, b, _)| (a.min(b), a.max(b))).collect();
        if neighbors != graph_pairs {
            return Err(format!("level {l}: graph edges differ from adjacent partitions"));
        }
        let mut total = 0.0;
        for (a, b, w) in level.graph.edges() {
            let d = dist[level.centers[a]][level.centers[b]];
            audit.weight_error = audit.weight_error.max((w - kernel(d, h.sigma())).abs());
            total += d;
        }
        match (level.mean_neighbor_distance, neighbors.len()) {
            (None, 0) => {}
            (Some(m), n) if n > 0 => {
                audit.mean_error = audit.mean_error.max((m - total / n as f64).abs());
            }
            (m, n) => return Err(format!("level {l}: mean distance {m:?} with {n} neighbor pairs")),
        }
        previous = Some(memb);
    }
    Ok(audit)
}

/// Relative disagreement between the recurrence-based convolution and
/// per-channel filtering through the eigenbasis of the dense Laplacian, on
/// one random graph with `n` vertices.
pub fn conv_oracle_error<R: rand::Rng>(rng: &mut R, n: usize, f_in: usize, f_out: usize, order: usize) -> f64 {
    use resgcn_core::conv::{cheb_conv_forward, ChebFilterBank};
    use resgcn_core::graph::{normalized_laplacian, scale_laplacian};
    use resgcn_core::testing::{random_connected_graph, random_vec};

    let p = rng.random_range(0.0..0.5);
    let g = random_connected_graph(rng, n, p);
    let lap = normalized_laplacian(&g);
    let scaled = scale_laplacian(&lap, lap.lambda_max(1e-12).unwrap()).unwrap();
    let bank = ChebFilterBank::<f64>::from_parts(
        order,
        f_in,
        f_out,
        random_vec(rng, order * f_in * f_out),
        Some(random_vec(rng, f_out)),
    )
    .unwrap();
    let x = random_vec(rng, n * f_in);
    let (y, _) = cheb_conv_forward(&scaled, &x, &bank).unwrap();

    let dense = dense_laplacian(&g);
    let lmax = max_eigenvalue(&dense);
    let mut expected = vec![0.0; n * f_out];
    for f in 0..f_in {
        let xf: Vec<f64> = (0..n).map(|i| x[i * f_in + f]).collect();
        for o in 0..f_out {
            let theta: Vec<f64> = (0..order).map(|k| bank.theta[bank.index(k, f, o)]).collect();
            for (i, v) in spectral_filter(&dense, lmax, &theta, &xf).into_iter().enumerate() {
                expected[i * f_out + o] += v;
            }
        }
    }
    let bias = bank.bias.as_ref().unwrap();
    for (i, e) in expected.iter_mut().enumerate() {
        *e += bias[i % f_out];
    }
    max_abs_diff(&y, &expected) / max_abs(&expected).max(f64::MIN_POSITIVE)
}

/// Small network over a depth-4 icosphere hierarchy: 16 finest vertices,
/// two pooling blocks, two input features.
pub fn toy_network(seed: u64) -> (resgcn_core::mesh::MeshHierarchy, resgcn_core::nn::ResGcn<f64>) {
    use resgcn_core::mesh::{build_hierarchy, icosphere, HierarchyOptions};
    use resgcn_core::nn::{seeded_rng, LambdaMax, ModelConfig, Pyramid, ResGcn, INIT_STREAM};
    let opts = HierarchyOptions {
        sigma: 2.0,
        stop_distance: 1e-12,
        max_depth: 4,
    };
    let h = build_hierarchy(&icosphere(2, 10.0), &opts).unwrap();
    let cfg = ModelConfig {
        kernels_per_conv: 4,
        n_blocks: 2,
        fc_units: 8,
        post_resblock_units: 6,
        precision: resgcn_core::Precision::F64,
        ..Default::default()
    };
    let pyr = std::sync::Arc::new(Pyramid::from_hierarchy(&h, 2, LambdaMax::Computed).unwrap());
    let model = ResGcn::new(&cfg, pyr, 2, &mut seeded_rng(seed, INIT_STREAM)).unwrap();
    (h, model)
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

/// Checks the Grad-CAM invariants with exact comparisons:
/// nonnegative maps, zero gradients giving the zero map, argmax invariance
/// when the gradients are scaled by powers of two, and constancy of the
/// upsampled map on every descendant set.
pub fn gradcam_invariants(seed: u64) -> Result<(), String> {
    use rand::{Rng, SeedableRng};
    use resgcn_core::explain::{cam_level, class_activation_map, grad_cam_batch, neuron_importance, upsample_cam};
    use resgcn_core::nn::Classifier;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(format!("seed {seed}: {what}")) };

    // Layer-level: random gradients and maps.
    let (nodes, maps) = (rng.random_range(1..40), rng.random_range(1..8));
    let grad = resgcn_core::testing::random_vec(&mut rng, nodes * maps);
    let act = resgcn_core::testing::random_vec(&mut rng, nodes * maps);
    let alpha = neuron_importance(&grad, maps).map_err(|e| e.to_string())?;
    let cam = class_activation_map(&alpha, &act, 0, 1).map_err(|e| e.to_string())?;
    check(cam.values.iter().all(|&v| v >= 0.0), "negative map value")?;
    let zero = neuron_importance(&vec![0.0; nodes * maps], maps).map_err(|e| e.to_string())?;
    let zero_cam = class_activation_map(&zero, &act, 0, 1).map_err(|e| e.to_string())?;
    check(zero_cam.values.iter().all(|&v| v == 0.0), "zero gradient gave a nonzero map")?;
    for k in [-20, -3, 1, 7, 40] {
        let s = 2f64.powi(k);
        let scaled: Vec<f64> = grad.iter().map(|g| g * s).collect();
        let a2 = neuron_importance(&scaled, maps).map_err(|e| e.to_string())?;
        check(a2.iter().zip(&alpha).all(|(a, b)| *a == b * s), "importance did not scale")?;
        let c2 = class_activation_map(&a2, &act, 0, 1).map_err(|e| e.to_string())?;
        check(c2.values.iter().zip(&cam.values).all(|(a, b)| *a == b * s), "map did not scale")?;
        check(argmax(&c2.values) == argmax(&cam.values), "argmax moved under scaling")?;
    }

    // Model-level: maps from a random network on random inputs.
    let (h, mut model) = toy_network(seed);
    let level = cam_level(&model, &h).map_err(|e| e.to_string())?;
    let batch = rng.random_range(1..5);
    let x = resgcn_core::testing::random_vec(&mut rng, batch * model.input_len());
    let depth = h.depth();
    for class in 0..2 {
        let (cams, _) = grad_cam_batch(&mut model, &x, batch, class, level).map_err(|e| e.to_string())?;
        for cam in &cams {
            check(cam.values.len() == h.level_size(level), "map has the wrong size")?;
            check(cam.values.iter().all(|&v| v >= 0.0), "negative model map value")?;
            let up = upsample_cam(cam, &h).map_err(|e| e.to_string())?;
            let fine = up.finest_values.as_ref().ok_or("no finest values")?;
            check(fine.len() == h.level_size(depth), "finest map has the wrong size")?;
            for (v, &value) in fine.iter().enumerate() {
                check(value == cam.values[v >> (depth - level)], "finest map not constant on a descendant set")?;
            }
            let mesh = h.project_to_mesh(fine).map_err(|e| e.to_string())?;
            let coarse = h.assignment(level).map_err(|e| e.to_string())?;
            for (m, &p) in coarse.membership.iter().enumerate() {
                check(mesh[m] == cam.values[p], "mesh map not constant on a partition")?;
            }
        }
    }

    // A zero output layer makes every class-score gradient vanish.
    let fc2 = model.store_mut().params_mut().iter_mut().find(|p| p.name == "fc2.weight");
    fc2.ok_or("no fc2.weight")?.value.iter_mut().for_each(|w| *w = 0.0);
    let (cams, _) = grad_cam_batch(&mut model, &x, batch, 1, level).map_err(|e| e.to_string())?;
    check(cams.iter().all(|c| c.values.iter().all(|&v| v == 0.0)), "zero output layer gave a nonzero map")
}
