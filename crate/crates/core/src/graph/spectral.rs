use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::laplacian::{hash_unit, normalized_laplacian, NormalizedLaplacian};
use super::{CsrMatrix, GraphError, SparseGraph};

/// Largest matrix handed to the dense eigensolver.
pub const DENSE_EIGEN_CAP: usize = 256;

const FIEDLER_BLOCK: usize = 4;
const FIEDLER_TOL: f64 = 1e-10;
const FIEDLER_ACCEPT: f64 = 1e-7;
const FIEDLER_MAX_ITER: usize = 500;

/// Eigenvalues (ascending) and matching orthonormal eigenvectors (columns) of a
/// symmetric sparse matrix, via dense decomposition.
pub fn dense_eigen(m: &CsrMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), GraphError> {
    let n = m.dim();
    if n > DENSE_EIGEN_CAP {
        return Err(GraphError::TooLargeForDense { n, cap: DENSE_EIGEN_CAP });
    }
    let eig = SymmetricEigen::new(m.to_nalgebra());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Chebyshev series `sum_k theta_k T_k(x)` at a scalar point.
fn chebyshev_series(theta: &[f64], x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    let mut acc = 0.0;
    for (k, &t) in theta.iter().enumerate() {
        let tk = match k {
            0 => 1.0,
            1 => x,
            _ => {
                let next = 2.0 * x * cur - prev;
                prev = cur;
                cur = next;
                next
            }
        };
        acc += t * tk;
    }
    acc
}

/// Spectral filtering through the eigenbasis: `U g(Lambda~) U^T x` where
/// `g` is the Chebyshev series with coefficients `theta` evaluated on the
/// eigenvalues of the scaled Laplacian. Intended as a reference for small
/// graphs.
pub fn dense_spectral_filter(
    lap: &NormalizedLaplacian,
    lambda_max: f64,
    theta: &[f64],
    x: &[f64],
) -> Result<Vec<f64>, GraphError> {
    let n = lap.n_vertices();
    if x.len() != n {
        return Err(GraphError::LengthMismatch { expected: n, got: x.len() });
    }
    if !(lambda_max > 0.0) {
        return Err(GraphError::NonPositiveLambda(lambda_max));
    }
    let (values, u) = dense_eigen(lap.matrix())?;
    let xv = DVector::from_column_slice(x);
    let spectral = u.transpose() * xv;
    let filtered = DVector::from_iterator(
        n,
        values
            .iter()
            .zip(spectral.iter())
            .map(|(&lam, &c)| chebyshev_series(theta, 2.0 * lam / lambda_max - 1.0) * c),
    );
    Ok((u * filtered).iter().copied().collect())
}

/// Second-smallest eigenpair of the normalized Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct Fiedler {
    pub value: f64,
    pub vector: Vec<f64>,
}

fn fix_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project_out(v: &mut [f64], u: &[f64]) {
    let c = dot(v, u);
    v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
}

/// Conjugate gradients for `L y = b` restricted to the complement of the
/// unit null vector `u`.
fn solve_deflated(m: &CsrMatrix<f64>, u: &[f64], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    project_out(&mut r, u);
    let b_norm = dot(&r, &r).sqrt();
    if b_norm == 0.0 {
        return x;
    }
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..(20 * n).max(100) {
        let ap = m.mul_vec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        project_out(&mut r, u);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= 1e-13 * b_norm {
            break;
        }
        let beta = rr_new / rr;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        rr = rr_new;
    }
    project_out(&mut x, u);
    x
}

/// Modified Gram-Schmidt on the columns, dropping near-dependent ones.
fn orthonormalize(block: &mut Vec<Vec<f64>>, u: &[f64]) {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(block.len());
    for mut v in block.drain(..) {
        project_out(&mut v, u);
        for q in &out {
            project_out(&mut v, q);
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
            out.push(v);
        }
    }
    *block = out;
}

/// Block inverse iteration with Rayleigh-Ritz extraction, deflating the
/// known null vector `D^{1/2} 1`. Robust to (near-)degenerate `lambda_2`.
fn fiedler_iterative(g: &SparseGraph, lap: &NormalizedLaplacian) -> Result<Fiedler, GraphError> {
    let n = g.n_vertices();
    let m = lap.matrix();
    let mut u: Vec<f64> = g.degrees().iter().map(|d| d.sqrt()).collect();
    let un = dot(&u, &u).sqrt();
    u.iter_mut().for_each(|x| *x /= un);

    let width = FIEDLER_BLOCK.min(n - 1);
    let mut block: Vec<Vec<f64>> = (0..width)
        .map(|c| (0..n).map(|i| hash_unit((c * n + i) as u64 + 17)).collect())
        .collect();
    orthonormalize(&mut block, &u);

    let mut best = (f64::INFINITY, Fiedler { value: 0.0, vector: vec![0.0; n] });
    for _ in 0..FIEDLER_MAX_ITER {
        let mut next: Vec<Vec<f64>> = block.iter().map(|b| solve_deflated(m, &u, b)).collect();
        orthonormalize(&mut next, &u);
        if next.is_empty() {
            break;
        }
        let images: Vec<Vec<f64>> = next.iter().map(|q| m.mul_vec(q)).collect();
        let k = next.len();
        let h = DMatrix::from_fn(k, k, |a, b| dot(&next[a], &images[b]));
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let ritz: Vec<Vec<f64>> = order
            .iter()
            .map(|&c| {
                let mut v = vec![0.0; n];
                for (a, q) in next.iter().enumerate() {
                    let w = eig.eigenvectors[(a, c)];
                    v.iter_mut().zip(q).for_each(|(vi, qi)| *vi += w * qi);
                }
                v
            })
            .collect();
        let value = eig.eigenvalues[order[0]];
        let lv = m.mul_vec(&ritz[0]);
        let residual = lv
            .iter()
            .zip(&ritz[0])
            .map(|(a, b)| (a - value * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual < best.0 {
            best = (residual, Fiedler { value, vector: ritz[0].clone() });
        }
        block = ritz;
        if residual <= FIEDLER_TOL {
            break;
        }
    }
    if best.0 > FIEDLER_ACCEPT {
        return Err(GraphError::NoConvergence {
            iterations: FIEDLER_MAX_ITER,
            residual: best.0,
        });
    }
    Ok(best.1)
}

/// Fiedler pair of a connected graph with at least two vertices.
///
/// Graphs up to [`DENSE_EIGEN_CAP`] vertices use a dense eigendecomposition;
/// larger ones use deflated block inverse iteration. The vector has unit norm
/// and its first nonzero entry is positive.
pub fn fiedler(g: &SparseGraph) -> Result<Fiedler, GraphError> {
    let n = g.n_vertices();
    if n < 2 {
        return Err(GraphError::TooFewVertices { n, needed: 2 });
    }
    let (components, _) = g.component_labels();
    if components != 1 {
        return Err(GraphError::Disconnected { components });
    }
    let lap = normalized_laplacian(g);
    let mut result = if n <= DENSE_EIGEN_CAP {
        let (values, vectors) = dense_eigen(lap.matrix())?;
        Fiedler {
            value: values[1],
            vector: vectors.column(1).iter().copied().collect(),
        }
    } else {
        fiedler_iterative(g, &lap)?
    };
    fix_sign(&mut result.vector);
    Ok(result)
}

pub fn fiedler_vector(g: &SparseGraph) -> Result<Vec<f64>, GraphError> {
    fiedler(g).map(|f| f.vector)
}

/// Scaled Laplacian of a graph using the dense spectrum's exact `lambda_max`.
#[cfg(test)]
pub(crate) fn exact_scaled(g: &SparseGraph) -> (NormalizedLaplacian, f64, CsrMatrix<f64>) {
    let lap = normalized_laplacian(g);
    let (values, _) = dense_eigen(lap.matrix()).unwrap();
    let lm = *values.last().unwrap();
    let s = super::scale_laplacian(&lap, lm).unwrap();
    (lap, lm, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;

    fn path(n: usize) -> SparseGraph {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        build_graph(n, &edges).unwrap()
    }

    #[test]
    fn constant_filter_scales_signal() {
        let g = path(5);
        let lap = normalized_laplacian(&g);
        let x = [1.0, -2.0, 0.5, 3.0, 0.0];
        let y = dense_spectral_filter(&lap, 2.0, &[2.5], &x).unwrap();
        for (a, b) in y.iter().zip(&x) {
            assert!((a - 2.5 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn first_order_filter_is_scaled_laplacian() {
        let g = build_graph(2, &[(0, 1, 1.0)]).unwrap();
        let lap = normalized_laplacian(&g);
        let y = dense_spectral_filter(&lap, 2.0, &[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!(y[0].abs() < 1e-12);
        assert!((y[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn fiedler_of_single_edge() {
        let g = build_graph(2, &[(0, 1, 1.0)]).unwrap();
        let v = fiedler_vector(&g).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - s).abs() < 1e-12 && (v[1] + s).abs() < 1e-12);
    }

    #[test]
    fn fiedler_of_path_is_monotone() {
        let v = fiedler_vector(&path(4)).unwrap();
        assert!(v.windows(2).all(|w| w[0] > w[1]), "{v:?}");
    }

    #[test]
    fn fiedler_rejects_disconnected_and_tiny() {
        let g = build_graph(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(matches!(fiedler(&g), Err(GraphError::Disconnected { components: 2 })));
        assert!(matches!(
            fiedler(&build_graph(1, &[]).unwrap()),
            Err(GraphError::TooFewVertices { .. })
        ));
    }

    #[test]
    fn iterative_path_agrees_with_dense() {
        // A 2D grid large enough to be interesting but still dense-solvable.
        let side = 12;
        let mut edges = Vec::new();
        for r in 0..side {
            for c in 0..side {
                let i = r * side + c;
                if c + 1 < side {
                    edges.push((i, i + 1, 1.0 + 0.1 * hash_unit(i as u64).abs()));
                }
                if r + 1 < side {
                    edges.push((i, i + side, 1.0 + 0.1 * hash_unit(i as u64 + 999).abs()));
                }
            }
        }
        let g = build_graph(side * side, &edges).unwrap();
        let lap = normalized_laplacian(&g);
        let dense = fiedler(&g).unwrap();
        let mut iter = fiedler_iterative(&g, &lap).unwrap();
        fix_sign(&mut iter.vector);
        assert!((dense.value - iter.value).abs() < 1e-9);
        let overlap = dot(&dense.vector, &iter.vector).abs();
        assert!((overlap - 1.0).abs() < 1e-6, "overlap {overlap}");
    }

    #[test]
    fn dense_cap_enforced() {
        let g = path(DENSE_EIGEN_CAP + 1);
        let lap = normalized_laplacian(&g);
        let x = vec![0.0; DENSE_EIGEN_CAP + 1];
        assert!(matches!(
            dense_spectral_filter(&lap, 2.0, &[1.0], &x),
            Err(GraphError::TooLargeForDense { .. })
        ));
        // The iterative path handles the same graph. The random-walk form
        // D^{-1/2} v of the path's Fiedler vector is strictly monotone.
        let f = fiedler(&g).unwrap();
        let exact = 1.0 - (std::f64::consts::PI / DENSE_EIGEN_CAP as f64).cos();
        assert!((f.value - exact).abs() < 1e-12);
        let walk: Vec<f64> = f.vector.iter().zip(g.degrees()).map(|(v, d)| v / d.sqrt()).collect();
        assert!(walk.windows(2).all(|w| w[0] > w[1]));
    }
}
