use std::sync::OnceLock;

use super::spectral::{dense_eigen, DENSE_EIGEN_CAP};
use super::{CsrMatrix, GraphError, SparseGraph};

/// Default relative tolerance for [`estimate_lambda_max`].
pub const DEFAULT_LAMBDA_TOL: f64 = 1e-6;
/// Hard cap on power-iteration steps.
pub const LAMBDA_MAX_ITERATION_CAP: usize = 10_000;

/// `L = I - D^{-1/2} A D^{-1/2}` together with a lazily estimated largest
/// eigenvalue.
///
/// Isolated vertices get `D^{-1/2} = 0`, so their row is the identity row.
#[derive(Debug, Clone)]
pub struct NormalizedLaplacian {
    matrix: CsrMatrix<f64>,
    lambda_max: OnceLock<f64>,
}

impl PartialEq for NormalizedLaplacian {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl NormalizedLaplacian {
    pub fn matrix(&self) -> &CsrMatrix<f64> {
        &self.matrix
    }

    pub fn n_vertices(&self) -> usize {
        self.matrix.dim()
    }

    /// Cached largest eigenvalue, if it has been estimated.
    pub fn cached_lambda_max(&self) -> Option<f64> {
        self.lambda_max.get().copied()
    }

    /// Largest eigenvalue, estimated once by power iteration and cached.
    /// Graphs small enough for the dense solver fall back to it when the
    /// iteration stalls on a narrow spectral gap.
    pub fn lambda_max(&self, tol: f64) -> Result<f64, GraphError> {
        if let Some(&v) = self.lambda_max.get() {
            return Ok(v);
        }
        let v = match estimate_lambda_max(self, tol) {
            Ok(v) => v,
            Err(GraphError::NoConvergence { .. }) if self.n_vertices() <= DENSE_EIGEN_CAP => {
                let (values, _) = dense_eigen(&self.matrix)?;
                values.last().copied().unwrap_or(0.0).clamp(f64::MIN_POSITIVE, 2.0)
            }
            Err(e) => return Err(e),
        };
        Ok(*self.lambda_max.get_or_init(|| v))
    }
}

pub fn normalized_laplacian(g: &SparseGraph) -> NormalizedLaplacian {
    let n = g.n_vertices();
    let deg = g.degrees();
    let mut triplets = Vec::with_capacity(n + 2 * g.n_edges());
    for i in 0..n {
        triplets.push((i, i, 1.0));
        for &(j, w) in g.neighbors(i) {
            if w == 0.0 {
                continue;
            }
            // One rounding in the square root keeps regular unit graphs exact.
            let v = w / (deg[i] * deg[j]).sqrt();
            if v != 0.0 {
                triplets.push((i, j, -v));
            }
        }
    }
    NormalizedLaplacian {
        matrix: CsrMatrix::from_triplets(n, &triplets),
        lambda_max: OnceLock::new(),
    }
}

/// SplitMix64 output mapped to `[-1, 1)`; a platform-independent deterministic
/// perturbation.
pub(crate) fn hash_unit(i: u64) -> f64 {
    let mut z = i.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Window over which the Rayleigh quotient's convergence rate is measured.
const RATE_WINDOW: usize = 32;

/// Largest eigenvalue of `L` by power iteration.
///
/// The start vector is the all-ones vector with a fixed deterministic
/// perturbation, so it is never orthogonal to the dominant eigenspace in
/// practice. Iteration stops once the eigen-residual `||Lv - rho v||` drops
/// below `tol * rho`, which bounds the distance from `rho` to the spectrum.
///
/// On meshes the top of the spectrum is clustered and the eigenvector
/// converges far slower than its eigenvalue. `L` is positive semidefinite,
/// so the Rayleigh quotient rises monotonically and geometrically; once the
/// extrapolated remaining rise is below `tol * rho` the extrapolated limit
/// is returned. The result is clamped to `(0, 2]`.
pub fn estimate_lambda_max(lap: &NormalizedLaplacian, tol: f64) -> Result<f64, GraphError> {
    let n = lap.n_vertices();
    if n == 0 {
        return Err(GraphError::TooFewVertices { n, needed: 1 });
    }
    let m = &lap.matrix;
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * hash_unit(i as u64)).collect();
    normalize(&mut v);
    let mut residual = f64::INFINITY;
    let mut rhos: Vec<f64> = Vec::new();
    for k in 0..LAMBDA_MAX_ITERATION_CAP {
        let mut w = m.mul_vec(&v);
        let rho: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - rho * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol * rho.abs() {
            return Ok(rho.clamp(f64::MIN_POSITIVE, 2.0));
        }
        rhos.push(rho);
        if k > RATE_WINDOW + 1 {
            let step = |j: usize| rhos[j] - rhos[j - 1];
            let (now, before) = (step(k), step(k - RATE_WINDOW));
            if now > 0.0 && before > now {
                let q = (now / before).powf(1.0 / RATE_WINDOW as f64);
                let tail = now * q / (1.0 - q);
                if tail <= 0.5 * tol * rho {
                    return Ok((rho + tail).clamp(f64::MIN_POSITIVE, 2.0));
                }
            }
        }
        if normalize(&mut w) == 0.0 {
            // Landed in the null space; restart from a different perturbation.
            w = (0..n).map(|i| hash_unit(i as u64 + 0x5151)).collect();
            normalize(&mut w);
        }
        v = w;
    }
    Err(GraphError::NoConvergence {
        iterations: LAMBDA_MAX_ITERATION_CAP,
        residual,
    })
}

/// `L~ = 2 L / lambda_max - I`.
pub fn scale_laplacian(lap: &NormalizedLaplacian, lambda_max: f64) -> Result<CsrMatrix<f64>, GraphError> {
    if !(lambda_max > 0.0) {
        return Err(GraphError::NonPositiveLambda(lambda_max));
    }
    Ok(lap.matrix.affine_identity(2.0 / lambda_max, -1.0))
}
