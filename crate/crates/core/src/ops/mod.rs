//! Differentiable operators over [`Var`](crate::autograd::Var).
//!
//! Unary and shape operators are methods on `Var`; operators taking several
//! tensors (convolution, normalization, linear maps, losses) are free
//! functions re-exported here.

mod conv;
mod elementwise;
mod linear;
mod loss;
mod norm;
mod pool;
mod shape;

pub use conv::{channel_conv1d, conv2d, conv_output_size};
pub use linear::{contract_last, linear};
pub use loss::{softmax, softmax_cross_entropy};
pub use norm::{batch_norm, RunningStats};
pub use pool::adaptive_bin;

use crate::error::{Error, Result};

pub(crate) fn expect_rank(shape: &[usize], rank: usize, what: &str) -> Result<()> {
    if shape.len() != rank {
        return Err(Error::dim(format!(
            "{what} expects a rank-{rank} tensor, got shape {shape:?}"
        )));
    }
    Ok(())
}

pub(crate) fn same_shape(a: &[usize], b: &[usize], what: &str) -> Result<()> {
    if a != b {
        return Err(Error::dim(format!("{what}: shapes {a:?} and {b:?} differ")));
    }
    Ok(())
}
