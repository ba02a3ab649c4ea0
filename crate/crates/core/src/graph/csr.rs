//! Compressed sparse row storage for square matrices.

use num_traits::{Float, NumCast};
use serde::{Deserialize, Serialize};

/// Square sparse matrix in CSR layout. Column indices within a row are sorted
/// and unique.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix<T> {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Float> CsrMatrix<T> {
    /// Builds an `n x n` matrix from `(row, col, value)` triplets. Duplicate
    /// coordinates are summed.
    ///
    /// Panics if a coordinate is out of range; callers validate indices first.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) out of range for n = {n}");
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut iter = row.into_iter().peekable();
            while let Some((j, mut v)) = iter.next() {
                while let Some(&(j2, v2)) = iter.peek() {
                    if j2 != j {
                        break;
                    }
                    v = v + v2;
                    iter.next();
                }
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates the stored entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Iterates every stored entry as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => T::zero(),
        }
    }

    /// `y = A x` for a vector.
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n, "vector length mismatch");
        (0..self.n)
            .map(|i| self.row(i).fold(T::zero(), |acc, (j, v)| acc + v * x[j]))
            .collect()
    }

    /// `Y = A X` where `X` is `n x cols`, row-major.
    pub fn mul_dense(&self, x: &[T], cols: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.n * cols];
        self.mul_dense_into(x, cols, &mut out);
        out
    }

    /// Writes `A X` into `out` (overwriting it).
    pub fn mul_dense_into(&self, x: &[T], cols: usize, out: &mut [T]) {
        assert_eq!(x.len(), self.n * cols, "dense operand shape mismatch");
        assert_eq!(out.len(), self.n * cols, "dense output shape mismatch");
        for i in 0..self.n {
            let dst = &mut out[i * cols..(i + 1) * cols];
            dst.iter_mut().for_each(|d| *d = T::zero());
            for (j, v) in self.row(i) {
                let src = &x[j * cols..(j + 1) * cols];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = *d + v * s;
                }
            }
        }
    }

    /// Returns `alpha * self + beta * I`.
    pub fn affine_identity(&self, alpha: T, beta: T) -> Self {
        let mut triplets: Vec<(usize, usize, T)> =
            self.triplets().map(|(i, j, v)| (i, j, alpha * v)).collect();
        triplets.extend((0..self.n).map(|i| (i, i, beta)));
        Self::from_triplets(self.n, &triplets)
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.triplets()
            .all(|(i, j, v)| (self.get(j, i) - v).abs() <= tol)
    }

    /// Converts the stored values to another float type.
    pub fn cast<U: Float>(&self) -> CsrMatrix<U> {
        CsrMatrix {
            n: self.n,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self
                .values
                .iter()
                .map(|&v| <U as NumCast>::from(v).expect("float cast"))
                .collect(),
        }
    }

    /// Dense row-major copy, mainly for tests and small-matrix oracles.
    pub fn to_dense(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.n * self.n];
        for (i, j, v) in self.triplets() {
            out[i * self.n + j] = v;
        }
        out
    }
}

impl CsrMatrix<f64> {
    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.n, self.n, &self.to_dense())
    }
}
