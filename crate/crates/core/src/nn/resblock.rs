use rand::Rng;

use super::layers::{relu_backward, relu_forward, relu_margin, BatchNorm, BnCache, ChebConv};
use super::param::ParamStore;
use super::NnError;
use crate::conv::ChebCache;
use crate::graph::CsrMatrix;
use crate::real::Real;

/// Pre-activation residual block: two `BN -> ReLU -> ChebConv` stages on the
/// main path plus a skip that is the identity when the channel count is
/// unchanged and an order-1 (per-vertex linear) convolution otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct ResBlock {
    pub f_in: usize,
    pub f_out: usize,
    pub bn1: BatchNorm,
    pub conv1: ChebConv,
    pub bn2: BatchNorm,
    pub conv2: ChebConv,
    pub skip: Option<ChebConv>,
}

#[derive(Clone, Debug)]
pub struct ResBlockCache<T> {
    bn1: BnCache<T>,
    relu1_in: Vec<T>,
    conv1: Vec<ChebCache<T>>,
    bn2: BnCache<T>,
    relu2_in: Vec<T>,
    conv2: Vec<ChebCache<T>>,
    skip: Option<Vec<ChebCache<T>>>,
}

impl<T: Real> ResBlockCache<T> {
    /// Distance of the ReLU inputs from the kink.
    pub fn margin(&self) -> f64 {
        relu_margin(&self.relu1_in).min(relu_margin(&self.relu2_in))
    }
}

impl ResBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        order: usize,
        f_in: usize,
        f_out: usize,
        with_bias: bool,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let bn1 = BatchNorm::new(store, &format!("{name}.bn1"), f_in);
        let conv1 = ChebConv::new(store, &format!("{name}.conv1"), order, f_in, f_out, with_bias, rng)?;
        let bn2 = BatchNorm::new(store, &format!("{name}.bn2"), f_out);
        let conv2 = ChebConv::new(store, &format!("{name}.conv2"), order, f_out, f_out, with_bias, rng)?;
        let skip = if f_in != f_out {
            Some(ChebConv::new(store, &format!("{name}.skip"), 1, f_in, f_out, with_bias, rng)?)
        } else {
            None
        };
        Ok(Self {
            f_in,
            f_out,
            bn1,
            conv1,
            bn2,
            conv2,
            skip,
        })
    }

    pub fn n_params(&self) -> usize {
        self.bn1.n_params()
            + self.conv1.n_params()
            + self.bn2.n_params()
            + self.conv2.n_params()
            + self.skip.as_ref().map_or(0, ChebConv::n_params)
    }

    pub fn forward<T: Real>(
        &self,
        store: &mut ParamStore<T>,
        lap: &CsrMatrix<T>,
        x: &[T],
        batch: usize,
        train: bool,
    ) -> Result<(Vec<T>, ResBlockCache<T>), NnError> {
        let (h, bn1) = self.bn1.forward(store, x, batch, train)?;
        let (r, relu1_in) = relu_forward(&h);
        let (c1, conv1) = self.conv1.forward(store, lap, &r, batch)?;
        let (h2, bn2) = self.bn2.forward(store, &c1, batch, train)?;
        let (r2, relu2_in) = relu_forward(&h2);
        let (mut out, conv2) = self.conv2.forward(store, lap, &r2, batch)?;
        let skip = match &self.skip {
            Some(conv) => {
                let (s, cache) = conv.forward(store, lap, x, batch)?;
                for (o, v) in out.iter_mut().zip(s) {
                    *o += v;
                }
                Some(cache)
            }
            None => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o += v;
                }
                None
            }
        };
        Ok((
            out,
            ResBlockCache {
                bn1,
                relu1_in,
                conv1,
                bn2,
                relu2_in,
                conv2,
                skip,
            },
        ))
    }

    pub fn backward<T: Real>(
        &self,
        store: &mut ParamStore<T>,
        lap: &CsrMatrix<T>,
        cache: &ResBlockCache<T>,
        dy: &[T],
    ) -> Result<Vec<T>, NnError> {
        let d = self.conv2.backward(store, lap, &cache.conv2, dy)?;
        let d = relu_backward(&cache.relu2_in, &d);
        let d = self.bn2.backward(store, &cache.bn2, &d)?;
        let d = self.conv1.backward(store, lap, &cache.conv1, &d)?;
        let d = relu_backward(&cache.relu1_in, &d);
        let mut dx = self.bn1.backward(store, &cache.bn1, &d)?;
        match (&self.skip, &cache.skip) {
            (Some(conv), Some(c)) => {
                let ds = conv.backward(store, lap, c, dy)?;
                for (a, b) in dx.iter_mut().zip(ds) {
                    *a += b;
                }
            }
            _ => {
                for (a, &b) in dx.iter_mut().zip(dy) {
                    *a += b;
                }
            }
        }
        Ok(dx)
    }
}
