//! Fusion of pyramid context features into per-channel gates.
//!
//! Every function here treats channels independently: pooling, weighting and
//! the per-channel batch normalization never mix information across the
//! channel axis.

use rand::Rng;

use super::config::BranchCombine;
use super::pyramid::PyramidContext;
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Mode};
use crate::ops::contract_last;
use crate::tensor::{Float, Tensor};

/// `z[n, c] = Σ_f w[f] · t[n, c, f]` (or `w[c, f]` for per-channel weights).
pub fn scfm_linear<'g, T: Float>(t: &PyramidContext<'g, T>, w: Var<'g, T>) -> Result<Var<'g, T>> {
    contract_last(t.values, w)
}

/// Inverted dropout over the context features, then the linear fusion.
pub fn scfm_dropout<'g, T: Float, R: Rng + ?Sized>(
    t: &PyramidContext<'g, T>,
    w: Var<'g, T>,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var<'g, T>> {
    let dropped = t.values.dropout(rate, training, rng)?;
    contract_last(dropped, w)
}

/// Encodes each grid independently, `e_k = Σ_j u_k[j] · s_k[j]`, then
/// combines the encodings, `z = Σ_k v[k] · e_k`.
pub fn scfm_hierarchical<'g, T: Float>(
    t: &PyramidContext<'g, T>,
    sizes: &[usize],
    encoders: &[Var<'g, T>],
    combiner: Var<'g, T>,
) -> Result<Var<'g, T>> {
    if encoders.len() != sizes.len() {
        return Err(Error::arg(format!(
            "hierarchical fusion needs {} encoders, got {}",
            sizes.len(),
            encoders.len()
        )));
    }
    let encoded = sizes
        .iter()
        .enumerate()
        .map(|(i, _)| contract_last(t.scale(sizes, i)?, encoders[i]))
        .collect::<Result<Vec<_>>>()?;
    let stacked = Var::concat_last(&encoded)?;
    contract_last(stacked, combiner)
}

/// Batch norm over the batch axis of `z: [N, C, 1]`, then sigmoid.
pub fn mcf<'g, T: Float>(
    g: &'g Graph<T>,
    z: Var<'g, T>,
    norm: &mut BatchNorm<T>,
    mode: &Mode<'_>,
) -> Result<Var<'g, T>> {
    Ok(norm.forward(g, z, mode)?.sigmoid())
}

/// One gated branch per grid size, `g_k = σ(BN_k(u_k · s_k))`, combined by
/// mean (or product). Emits the gate directly.
pub fn scfm_parallel<'g, T: Float>(
    g: &'g Graph<T>,
    t: &PyramidContext<'g, T>,
    sizes: &[usize],
    encoders: &[Var<'g, T>],
    norms: &mut [BatchNorm<T>],
    mode: &Mode<'_>,
    combine: BranchCombine,
) -> Result<Var<'g, T>> {
    if encoders.len() != sizes.len() || norms.len() != sizes.len() {
        return Err(Error::arg(format!(
            "parallel fusion needs {} encoders and norms, got {} and {}",
            sizes.len(),
            encoders.len(),
            norms.len()
        )));
    }
    let mut gate: Option<Var<'g, T>> = None;
    for (i, norm) in norms.iter_mut().enumerate() {
        let z = contract_last(t.scale(sizes, i)?, encoders[i])?;
        let branch = mcf(g, z, norm, mode)?;
        gate = Some(match (gate, combine) {
            (None, _) => branch,
            (Some(acc), BranchCombine::Mean) => acc.add(branch)?,
            (Some(acc), BranchCombine::Product) => acc.mul(branch)?,
        });
    }
    let gate = gate.expect("at least one branch");
    Ok(match combine {
        BranchCombine::Mean => gate.scale(T::one() / T::lit(sizes.len() as f64)),
        BranchCombine::Product => gate,
    })
}

/// Uniform fusion weights `1/len`.
pub(crate) fn uniform_weights<T: Float>(shape: &[usize], len: usize) -> Tensor<T> {
    Tensor::full(shape.to_vec(), T::one() / T::lit(len as f64))
}
