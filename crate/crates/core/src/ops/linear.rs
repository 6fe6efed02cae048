use super::expect_rank;
use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

/// `x · weightᵀ + bias` for `x: [N, in]`, `weight: [out, in]`, `bias: [out]`.
pub fn linear<'g, T: Float>(
    x: Var<'g, T>,
    weight: Var<'g, T>,
    bias: Option<Var<'g, T>>,
) -> Result<Var<'g, T>> {
    let (xv, wv) = (x.value(), weight.value());
    expect_rank(xv.shape(), 2, "linear input")?;
    expect_rank(wv.shape(), 2, "linear weight")?;
    let (n, din) = (xv.shape()[0], xv.shape()[1]);
    let (dout, win) = (wv.shape()[0], wv.shape()[1]);
    if win != din {
        return Err(Error::dim(format!(
            "linear: input width {din}, weight expects {win}"
        )));
    }
    let mut out = vec![T::zero(); n * dout];
    T::gemm(n, din, dout, xv.data(), false, wv.data(), true, T::zero(), &mut out);
    if let Some(b) = bias {
        let bv = b.value();
        if bv.shape() != [dout] {
            return Err(Error::dim(format!(
                "linear bias shape {:?}, expected [{dout}]",
                bv.shape()
            )));
        }
        for row in out.chunks_mut(dout) {
            row.iter_mut().zip(bv.data()).for_each(|(o, b)| *o += *b);
        }
    }
    let out = Tensor::from_vec([n, dout], out)?;
    let mut inputs = vec![x, weight];
    inputs.extend(bias);
    Ok(x.graph().record(out, &inputs, move |args| {
        let dy = args.grad;
        let (xd, wd) = (args.inputs[0].data(), args.inputs[1].data());
        let dx = args.needs[0].then(|| {
            let mut dx = vec![T::zero(); n * din];
            T::gemm(n, dout, din, dy, false, wd, false, T::zero(), &mut dx);
            dx
        });
        let dw = args.needs[1].then(|| {
            let mut dw = vec![T::zero(); dout * din];
            T::gemm(dout, n, din, dy, true, xd, false, T::zero(), &mut dw);
            dw
        });
        let mut grads = vec![dx, dw];
        if args.inputs.len() == 3 {
            grads.push(args.needs[2].then(|| {
                let mut db = vec![T::zero(); dout];
                for row in dy.chunks(dout) {
                    db.iter_mut().zip(row).for_each(|(a, g)| *a += *g);
                }
                db
            }));
        }
        grads
    }))
}

/// Contracts the last axis of `t: [N, C, F]` with a weight vector `[F]`
/// (shared by every channel) or a per-channel matrix `[C, F]`, giving
/// `[N, C, 1]`.
pub fn contract_last<'g, T: Float>(t: Var<'g, T>, weight: Var<'g, T>) -> Result<Var<'g, T>> {
    let (tv, wv) = (t.value(), weight.value());
    expect_rank(tv.shape(), 3, "contract_last")?;
    let (n, c, f) = (tv.shape()[0], tv.shape()[1], tv.shape()[2]);
    let per_channel = match wv.shape() {
        [len] if *len == f => false,
        [rows, len] if *rows == c && *len == f => true,
        other => {
            return Err(Error::arg(format!(
                "fusion weight shape {other:?} does not match {f} features over {c} channels"
            )))
        }
    };
    let row_weights = move |ch: usize| -> std::ops::Range<usize> {
        if per_channel {
            ch * f..(ch + 1) * f
        } else {
            0..f
        }
    };
    let mut out = Vec::with_capacity(n * c);
    for (row, feats) in tv.data().chunks(f).enumerate() {
        let w = &wv.data()[row_weights(row % c)];
        out.push(feats.iter().zip(w).map(|(a, b)| *a * *b).sum());
    }
    let out = Tensor::from_vec([n, c, 1], out)?;
    Ok(t.graph().record(out, &[t, weight], move |args| {
        let (td, wd) = (args.inputs[0].data(), args.inputs[1].data());
        let dt = args.needs[0].then(|| {
            let mut dt = Vec::with_capacity(n * c * f);
            for (row, &g) in args.grad.iter().enumerate() {
                let w = &wd[row_weights(row % c)];
                dt.extend(w.iter().map(|v| *v * g));
            }
            dt
        });
        let dw = args.needs[1].then(|| {
            let mut dw = vec![T::zero(); wd.len()];
            for (row, &g) in args.grad.iter().enumerate() {
                let range = row_weights(row % c);
                dw[range]
                    .iter_mut()
                    .zip(&td[row * f..(row + 1) * f])
                    .for_each(|(d, v)| *d += *v * g);
            }
            dw
        });
        vec![dt, dw]
    }))
}
