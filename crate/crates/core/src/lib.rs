//! Residual Chebyshev graph convolutional networks for classifying
//! triangulated surface meshes.
//!
//! The crate covers the full pipeline: weighted graphs and their normalized
//! Laplacians ([`graph`]), mesh-to-graph conversion with a binary partition
//! tree for pooling ([`mesh`]), Chebyshev spectral convolutions ([`conv`]),
//! the residual network with its training loop ([`nn`]), mesh Grad-CAM
//! ([`explain`]) and the evaluation harness ([`harness`]).

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conv;
pub mod explain;
pub mod graph;
pub mod harness;
pub mod mesh;
pub mod nn;
pub mod real;
pub mod testing;

pub use real::{Precision, Real};
