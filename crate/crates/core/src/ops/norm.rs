use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

/// Per-channel running mean and (unbiased) variance.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

impl<T: Float> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: Tensor::zeros([channels]),
            var: Tensor::ones([channels]),
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.numel()
    }
}

/// Batch normalization over `[N, C, H, W]` (statistics over N, H, W) or
/// `[N, C, L]` (statistics over N, L).
///
/// In training mode the batch statistics normalize the input and the running
/// statistics move by `momentum`; in eval mode the running statistics are
/// used unchanged. The affine transform applies only to the parameters given.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm<'g, T: Float>(
    x: Var<'g, T>,
    gamma: Option<Var<'g, T>>,
    beta: Option<Var<'g, T>>,
    stats: &mut RunningStats<T>,
    training: bool,
    eps: f64,
    momentum: f64,
) -> Result<Var<'g, T>> {
    if !(eps > 0.0) {
        return Err(Error::arg(format!("batch_norm eps must be > 0, got {eps}")));
    }
    let xv = x.value();
    let shape = xv.shape().to_vec();
    if shape.len() != 3 && shape.len() != 4 {
        return Err(Error::dim(format!(
            "batch_norm expects rank 3 or 4, got {shape:?}"
        )));
    }
    let (n, c) = (shape[0], shape[1]);
    let inner: usize = shape[2..].iter().product();
    if stats.channels() != c {
        return Err(Error::dim(format!(
            "batch_norm: {c} channels but running stats for {}",
            stats.channels()
        )));
    }
    for p in [gamma, beta].into_iter().flatten() {
        if p.shape() != [c] {
            return Err(Error::dim(format!(
                "batch_norm affine shape {:?}, expected [{c}]",
                p.shape()
            )));
        }
    }
    let count = n * inner;
    let data = xv.data();
    let channel = move |ch: usize| {
        (0..n).flat_map(move |b| {
            let start = (b * c + ch) * inner;
            start..start + inner
        })
    };

    let (mean, var): (Vec<f64>, Vec<f64>) = if training {
        (0..c)
            .map(|ch| {
                let m = channel(ch).map(|i| data[i].as_f64()).sum::<f64>() / count as f64;
                let v = channel(ch)
                    .map(|i| (data[i].as_f64() - m).powi(2))
                    .sum::<f64>()
                    / count as f64;
                (m, v)
            })
            .unzip()
    } else {
        (
            stats.mean.data().iter().map(|v| v.as_f64()).collect(),
            stats.var.data().iter().map(|v| v.as_f64()).collect(),
        )
    };
    if training {
        let unbias = if count > 1 {
            count as f64 / (count - 1) as f64
        } else {
            1.0
        };
        for ch in 0..c {
            let rm = &mut stats.mean.data_mut()[ch];
            *rm = T::lit((1.0 - momentum) * rm.as_f64() + momentum * mean[ch]);
            let rv = &mut stats.var.data_mut()[ch];
            *rv = T::lit((1.0 - momentum) * rv.as_f64() + momentum * var[ch] * unbias);
        }
    }
    let inv_std: Vec<T> = var.iter().map(|v| T::lit(1.0 / (v + eps).sqrt())).collect();
    let mean: Vec<T> = mean.into_iter().map(T::lit).collect();

    let mut xhat = vec![T::zero(); data.len()];
    for ch in 0..c {
        for i in channel(ch) {
            xhat[i] = (data[i] - mean[ch]) * inv_std[ch];
        }
    }
    let gv = gamma.map(|g| g.value());
    let bv = beta.map(|b| b.value());
    let mut out = xhat.clone();
    if gv.is_some() || bv.is_some() {
        for ch in 0..c {
            let s = gv.as_ref().map_or(T::one(), |g| g.data()[ch]);
            let t = bv.as_ref().map_or(T::zero(), |b| b.data()[ch]);
            for i in channel(ch) {
                out[i] = out[i] * s + t;
            }
        }
    }
    let out = Tensor::from_vec(shape, out)?;

    let mut inputs = vec![x];
    let gamma_slot = gamma.map(|g| {
        inputs.push(g);
        inputs.len() - 1
    });
    let beta_slot = beta.map(|b| {
        inputs.push(b);
        inputs.len() - 1
    });
    Ok(x.graph().record(out, &inputs, move |args| {
        let dy = args.grad;
        let scale: Vec<T> = match gamma_slot {
            Some(s) => args.inputs[s].data().to_vec(),
            None => vec![T::one(); c],
        };
        let mut grads: Vec<Option<Vec<T>>> = vec![None; args.inputs.len()];
        if args.needs[0] {
            let mut dx = vec![T::zero(); dy.len()];
            let m = T::lit(count as f64);
            for ch in 0..c {
                if training {
                    let (mut sum, mut dot) = (T::zero(), T::zero());
                    for i in channel(ch) {
                        let d = dy[i] * scale[ch];
                        sum += d;
                        dot += d * xhat[i];
                    }
                    let k = inv_std[ch] / m;
                    for i in channel(ch) {
                        dx[i] = k * (m * dy[i] * scale[ch] - sum - xhat[i] * dot);
                    }
                } else {
                    for i in channel(ch) {
                        dx[i] = dy[i] * scale[ch] * inv_std[ch];
                    }
                }
            }
            grads[0] = Some(dx);
        }
        if let Some(s) = gamma_slot.filter(|&s| args.needs[s]) {
            grads[s] = Some(
                (0..c)
                    .map(|ch| channel(ch).map(|i| dy[i] * xhat[i]).sum())
                    .collect(),
            );
        }
        if let Some(s) = beta_slot.filter(|&s| args.needs[s]) {
            grads[s] = Some((0..c).map(|ch| channel(ch).map(|i| dy[i]).sum()).collect());
        }
        grads
    }))
}
