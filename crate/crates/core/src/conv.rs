//! Chebyshev spectral graph convolution.
//!
//! A filter of order `K` applies `sum_k theta_k T_k(L~)` to a signal, where
//! `T_k` follows `T_k = 2 L~ T_{k-1} - T_{k-2}` with `T_0 = I`, `T_1 = L~`.
//! Signals are `N x F` row-major matrices; `T_k(L~) X` is built by the
//! recurrence without ever materializing `T_k(L~)`.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use thiserror::Error;

use crate::graph::CsrMatrix;
use crate::real::Real;

#[derive(Debug, Error, PartialEq)]
pub enum ConvError {
    #[error("Chebyshev order must be at least 1")]
    ZeroOrder,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Coefficients `theta[k, f_in, f_out]` and an optional per-output bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebFilterBank<T> {
    order: usize,
    f_in: usize,
    f_out: usize,
    pub theta: Vec<T>,
    pub bias: Option<Vec<T>>,
}

impl<T: Real> ChebFilterBank<T> {
    /// All-zero bank.
    pub fn zeros(order: usize, f_in: usize, f_out: usize, with_bias: bool) -> Result<Self, ConvError> {
        if order == 0 {
            return Err(ConvError::ZeroOrder);
        }
        Ok(Self {
            order,
            f_in,
            f_out,
            theta: vec![T::zero(); order * f_in * f_out],
            bias: with_bias.then(|| vec![T::zero(); f_out]),
        })
    }

    /// Coefficients uniform in `+-sqrt(6 / (K f_in + f_out))`, zero bias.
    pub fn init<R: Rng>(order: usize, f_in: usize, f_out: usize, with_bias: bool, rng: &mut R) -> Result<Self, ConvError> {
        let mut bank = Self::zeros(order, f_in, f_out, with_bias)?;
        let limit = (6.0 / (order * f_in + f_out) as f64).sqrt();
        let dist = Uniform::new(-limit, limit).expect("limit is positive and finite");
        for t in &mut bank.theta {
            *t = T::of(dist.sample(rng));
        }
        Ok(bank)
    }

    pub fn from_parts(order: usize, f_in: usize, f_out: usize, theta: Vec<T>, bias: Option<Vec<T>>) -> Result<Self, ConvError> {
        if order == 0 {
            return Err(ConvError::ZeroOrder);
        }
        if theta.len() != order * f_in * f_out {
            return Err(ConvError::Shape(format!(
                "theta has {} entries, expected {order}x{f_in}x{f_out}",
                theta.len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != f_out {
                return Err(ConvError::Shape(format!("bias has {} entries, expected {f_out}", b.len())));
            }
        }
        Ok(Self { order, f_in, f_out, theta, bias })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn f_in(&self) -> usize {
        self.f_in
    }

    pub fn f_out(&self) -> usize {
        self.f_out
    }

    #[inline]
    pub fn index(&self, k: usize, f: usize, g: usize) -> usize {
        (k * self.f_in + f) * self.f_out + g
    }

    pub fn n_params(&self) -> usize {
        self.theta.len() + self.bias.as_ref().map_or(0, Vec::len)
    }
}

/// `[T_0 X, T_1 X, ..., T_{K-1} X]`, each `N x f` row-major.
pub fn cheb_basis<T: Real>(lap: &CsrMatrix<T>, x: &[T], f: usize, order: usize) -> Result<Vec<Vec<T>>, ConvError> {
    if order == 0 {
        return Err(ConvError::ZeroOrder);
    }
    let n = lap.dim();
    if x.len() != n * f {
        return Err(ConvError::Shape(format!("signal has {} entries, expected {n}x{f}", x.len())));
    }
    let mut basis = Vec::with_capacity(order);
    basis.push(x.to_vec());
    if order > 1 {
        basis.push(lap.mul_dense(x, f));
    }
    let two = T::of(2.0);
    for k in 2..order {
        let mut next = lap.mul_dense(&basis[k - 1], f);
        for (v, &prev) in next.iter_mut().zip(&basis[k - 2]) {
            *v = two * *v - prev;
        }
        basis.push(next);
    }
    Ok(basis)
}

/// Forward state kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ChebCache<T> {
    basis: Vec<Vec<T>>,
}

impl<T> ChebCache<T> {
    pub fn basis(&self) -> &[Vec<T>] {
        &self.basis
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChebGrads<T> {
    pub dx: Vec<T>,
    pub dtheta: Vec<T>,
    pub dbias: Option<Vec<T>>,
}

/// Borrowed filter coefficients, laid out as in [`ChebFilterBank`].
#[derive(Clone, Copy, Debug)]
pub(crate) struct FilterRef<'a, T> {
    pub order: usize,
    pub f_in: usize,
    pub f_out: usize,
    pub theta: &'a [T],
    pub bias: Option<&'a [T]>,
}

impl<T: Real> ChebFilterBank<T> {
    pub(crate) fn as_ref(&self) -> FilterRef<'_, T> {
        FilterRef {
            order: self.order,
            f_in: self.f_in,
            f_out: self.f_out,
            theta: &self.theta,
            bias: self.bias.as_deref(),
        }
    }
}

/// `Y[:, g] = sum_k sum_f (T_k X)[:, f] theta[k, f, g] + bias[g]`.
pub fn cheb_conv_forward<T: Real>(
    lap: &CsrMatrix<T>,
    x: &[T],
    bank: &ChebFilterBank<T>,
) -> Result<(Vec<T>, ChebCache<T>), ConvError> {
    forward_ref(lap, x, bank.as_ref())
}

pub(crate) fn forward_ref<T: Real>(lap: &CsrMatrix<T>, x: &[T], w: FilterRef<'_, T>) -> Result<(Vec<T>, ChebCache<T>), ConvError> {
    let basis = cheb_basis(lap, x, w.f_in, w.order)?;
    let (n, fi, fo) = (lap.dim(), w.f_in, w.f_out);
    let mut y = vec![T::zero(); n * fo];
    if let Some(b) = w.bias {
        for row in y.chunks_exact_mut(fo) {
            row.copy_from_slice(b);
        }
    }
    for (k, bk) in basis.iter().enumerate() {
        let theta_k = &w.theta[k * fi * fo..(k + 1) * fi * fo];
        for (row, xrow) in y.chunks_exact_mut(fo).zip(bk.chunks_exact(fi)) {
            for (&a, th) in xrow.iter().zip(theta_k.chunks_exact(fo)) {
                for (yv, &t) in row.iter_mut().zip(th) {
                    *yv += a * t;
                }
            }
        }
    }
    Ok((y, ChebCache { basis }))
}

/// Exact gradients of [`cheb_conv_forward`]. `dX` runs the recurrence in
/// reverse, reusing `L~` as its own transpose.
pub fn cheb_conv_backward<T: Real>(
    lap: &CsrMatrix<T>,
    dy: &[T],
    cache: &ChebCache<T>,
    bank: &ChebFilterBank<T>,
) -> Result<ChebGrads<T>, ConvError> {
    let mut dtheta = vec![T::zero(); bank.theta.len()];
    let mut dbias = bank.bias.as_ref().map(|b| vec![T::zero(); b.len()]);
    let dx = backward_ref(lap, dy, cache, bank.as_ref(), &mut dtheta, dbias.as_deref_mut())?;
    Ok(ChebGrads { dx, dtheta, dbias })
}

/// Backward pass that adds the coefficient gradients into `dtheta` and
/// `dbias` and returns `dX`.
pub(crate) fn backward_ref<T: Real>(
    lap: &CsrMatrix<T>,
    dy: &[T],
    cache: &ChebCache<T>,
    w: FilterRef<'_, T>,
    dtheta: &mut [T],
    dbias: Option<&mut [T]>,
) -> Result<Vec<T>, ConvError> {
    let (n, fi, fo, order) = (lap.dim(), w.f_in, w.f_out, w.order);
    if dy.len() != n * fo {
        return Err(ConvError::Shape(format!("upstream gradient has {} entries, expected {n}x{fo}", dy.len())));
    }
    if cache.basis.len() != order || cache.basis[0].len() != n * fi {
        return Err(ConvError::Shape("cache does not match the filter bank".into()));
    }
    if let Some(db) = dbias {
        for row in dy.chunks_exact(fo) {
            for (d, &v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
    }

    // Gradient with respect to each basis term T_k X.
    let mut dbasis: Vec<Vec<T>> = Vec::with_capacity(order);
    for (k, bk) in cache.basis.iter().enumerate() {
        let range = k * fi * fo..(k + 1) * fi * fo;
        let theta_k = &w.theta[range.clone()];
        let dtheta_k = &mut dtheta[range];
        let mut db = vec![T::zero(); n * fi];
        for ((xrow, dyrow), dbrow) in bk.chunks_exact(fi).zip(dy.chunks_exact(fo)).zip(db.chunks_exact_mut(fi)) {
            for f in 0..fi {
                let a = xrow[f];
                let th = &theta_k[f * fo..(f + 1) * fo];
                let dt = &mut dtheta_k[f * fo..(f + 1) * fo];
                let mut acc = T::zero();
                for g in 0..fo {
                    dt[g] += a * dyrow[g];
                    acc += dyrow[g] * th[g];
                }
                dbrow[f] = acc;
            }
        }
        dbasis.push(db);
    }

    let two = T::of(2.0);
    for k in (2..order).rev() {
        let gk = std::mem::take(&mut dbasis[k]);
        let lg = lap.mul_dense(&gk, fi);
        for (d, &v) in dbasis[k - 1].iter_mut().zip(&lg) {
            *d += two * v;
        }
        for (d, &v) in dbasis[k - 2].iter_mut().zip(&gk) {
            *d -= v;
        }
    }
    if order > 1 {
        let lg = lap.mul_dense(&dbasis[1], fi);
        for (d, &v) in dbasis[0].iter_mut().zip(&lg) {
            *d += v;
        }
    }
    Ok(dbasis.swap_remove(0))
}
