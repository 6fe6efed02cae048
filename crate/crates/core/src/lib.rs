//! Efficient pyramid channel attention (EPCA) for convolutional classifiers.
//!
//! The crate is self-contained: a small reverse-mode autodiff engine
//! ([`autograd`], [`ops`]), the attention family ([`attention`]), residual
//! networks with parameter/FLOP auditing ([`network`]), an SGD trainer with
//! warm-restart cosine schedules and frozen-backbone adapter tuning
//! ([`train`]), evaluation metrics ([`metrics`]), Grad-CAM and fusion-weight
//! statistics ([`explain`]), and PGM/PPM datasets ([`data`]).

pub mod attention;
pub mod autograd;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod explain;
pub mod gradcheck;
pub mod metrics;
pub mod network;
pub mod nn;
pub mod ops;
pub mod rng;
pub mod tensor;
pub mod train;

pub use autograd::{Graph, Var};
pub use error::{Error, Result};
pub use tensor::{DType, Float, Tensor};

/// The guide's listings, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/autograd.md")]
    mod autograd {}
    #[doc = include_str!("../../../book/src/attention.md")]
    mod attention {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/explain.md")]
    mod explain {}
    #[doc = include_str!("../../../book/src/data-and-cli.md")]
    mod data_and_cli {}
}
