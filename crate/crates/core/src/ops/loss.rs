use super::expect_rank;
use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

/// Row-wise softmax of a `[N, K]` tensor.
pub fn softmax<T: Float>(logits: &Tensor<T>) -> Tensor<T> {
    let k = *logits.shape().last().expect("rank >= 1");
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Tensor::from_vec(logits.shape().to_vec(), out).expect("same shape")
}

/// Mean cross-entropy of `logits: [N, K]` against integer labels.
pub fn softmax_cross_entropy<'g, T: Float>(
    logits: Var<'g, T>,
    labels: &[usize],
) -> Result<Var<'g, T>> {
    let lv = logits.value();
    expect_rank(lv.shape(), 2, "softmax_cross_entropy")?;
    let (n, k) = (lv.shape()[0], lv.shape()[1]);
    if labels.len() != n {
        return Err(Error::dim(format!("{n} logit rows but {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::arg(format!("label {bad} out of range for {k} classes")));
    }
    let probs = softmax(&lv);
    let mut loss = T::zero();
    for (row, (&label, logit_row)) in labels.iter().zip(lv.data().chunks(k)).enumerate() {
        let max = logit_row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + logit_row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss += lse - lv.data()[row * k + label];
    }
    let inv_n = T::one() / T::lit(n as f64);
    let labels = labels.to_vec();
    Ok(logits
        .graph()
        .record(Tensor::scalar(loss * inv_n), &[logits], move |args| {
            let scale = args.grad[0] * inv_n;
            let mut g = probs.data().to_vec();
            for (row, &label) in labels.iter().enumerate() {
                g[row * k + label] -= T::one();
            }
            g.iter_mut().for_each(|v| *v *= scale);
            vec![Some(g)]
        }))
}
