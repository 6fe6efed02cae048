use rayon::prelude::*;

use super::expect_rank;
use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

/// `floor((len + 2·padding − kernel) / stride) + 1`.
pub fn conv_output_size(len: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (len + 2 * padding - kernel) / stride + 1
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    /// A 1×1, stride-1, unpadded conv reads its input as the column matrix.
    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Output columns `ox` whose input column `ox·s + j − p` lies in `[0, w)`.
    fn valid_cols(&self, j: usize) -> (usize, usize) {
        let lo = if self.pad > j {
            (self.pad - j).div_ceil(self.stride)
        } else {
            0
        };
        let hi = if self.w + self.pad > j {
            ((self.w + self.pad - j - 1) / self.stride + 1).min(self.ow)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    fn im2col<T: Float>(&self, x: &[T], col: &mut [T]) {
        let ohw = self.out_plane();
        for ci in 0..self.cin {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (ci * self.kh + i) * self.kw + j;
                    let dst = &mut col[row * ohw..(row + 1) * ohw];
                    let (lo, hi) = self.valid_cols(j);
                    for oy in 0..self.oh {
                        let out = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        let iy = (oy * self.stride + i).checked_sub(self.pad);
                        match iy.filter(|&y| y < self.h) {
                            None => out.fill(T::zero()),
                            Some(iy) => {
                                out[..lo].fill(T::zero());
                                out[hi..].fill(T::zero());
                                let src = &plane[iy * self.w..(iy + 1) * self.w];
                                if self.stride == 1 {
                                    let x0 = lo + j - self.pad;
                                    out[lo..hi].copy_from_slice(&src[x0..x0 + hi - lo]);
                                } else {
                                    for ox in lo..hi {
                                        out[ox] = src[ox * self.stride + j - self.pad];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Float>(&self, col: &[T], dx: &mut [T]) {
        let ohw = self.out_plane();
        for ci in 0..self.cin {
            let plane = &mut dx[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (ci * self.kh + i) * self.kw + j;
                    let src = &col[row * ohw..(row + 1) * ohw];
                    let (lo, hi) = self.valid_cols(j);
                    for oy in 0..self.oh {
                        let Some(iy) = (oy * self.stride + i)
                            .checked_sub(self.pad)
                            .filter(|&y| y < self.h)
                        else {
                            continue;
                        };
                        let dst = &mut plane[iy * self.w..(iy + 1) * self.w];
                        let grad = &src[oy * self.ow..(oy + 1) * self.ow];
                        for ox in lo..hi {
                            dst[ox * self.stride + j - self.pad] += grad[ox];
                        }
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation of `x: [N, Cin, H, W]` with `weight: [Cout, Cin, kh, kw]`.
pub fn conv2d<'g, T: Float>(
    x: Var<'g, T>,
    weight: Var<'g, T>,
    bias: Option<Var<'g, T>>,
    stride: usize,
    padding: usize,
) -> Result<Var<'g, T>> {
    let (xv, wv) = (x.value(), weight.value());
    expect_rank(xv.shape(), 4, "conv2d input")?;
    expect_rank(wv.shape(), 4, "conv2d weight")?;
    let [n, cin, h, w] = [xv.shape()[0], xv.shape()[1], xv.shape()[2], xv.shape()[3]];
    let [cout, wcin, kh, kw] = [wv.shape()[0], wv.shape()[1], wv.shape()[2], wv.shape()[3]];
    if wcin != cin {
        return Err(Error::dim(format!(
            "conv2d: input has {cin} channels, weight expects {wcin}"
        )));
    }
    if stride == 0 {
        return Err(Error::arg("conv2d stride must be >= 1"));
    }
    if kh > h + 2 * padding || kw > w + 2 * padding {
        return Err(Error::arg(format!(
            "conv2d kernel {kh}x{kw} larger than padded input {}x{}",
            h + 2 * padding,
            w + 2 * padding
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::dim(format!(
                "conv2d bias shape {:?}, expected [{cout}]",
                b.shape()
            )));
        }
    }
    let geo = Geometry {
        cin,
        h,
        w,
        kh,
        kw,
        stride,
        pad: padding,
        oh: conv_output_size(h, kh, stride, padding),
        ow: conv_output_size(w, kw, stride, padding),
    };
    let ohw = geo.out_plane();
    let k = geo.patch();

    let mut out = vec![T::zero(); n * cout * ohw];
    let (xd, wd) = (xv.data(), wv.data());
    out.par_chunks_mut(cout * ohw)
        .zip(xd.par_chunks(cin * h * w))
        .for_each(|(out_n, x_n)| {
            if geo.pointwise() {
                T::gemm(cout, k, ohw, wd, false, x_n, false, T::zero(), out_n);
            } else {
                let mut col = vec![T::zero(); k * ohw];
                geo.im2col(x_n, &mut col);
                T::gemm(cout, k, ohw, wd, false, &col, false, T::zero(), out_n);
            }
        });
    if let Some(b) = bias {
        let bv = b.value();
        for out_n in out.chunks_mut(cout * ohw) {
            for (plane, &bias) in out_n.chunks_mut(ohw).zip(bv.data()) {
                plane.iter_mut().for_each(|v| *v += bias);
            }
        }
    }
    let out = Tensor::from_vec([n, cout, geo.oh, geo.ow], out)?;

    let mut inputs = vec![x, weight];
    inputs.extend(bias);
    Ok(x.graph().record(out, &inputs, move |args| {
        let (xd, wd) = (args.inputs[0].data(), args.inputs[1].data());
        let dy = args.grad;
        let mut dx = if args.needs[0] {
            vec![T::zero(); n * cin * h * w]
        } else {
            Vec::new()
        };
        let need_dx = args.needs[0];
        let need_dw = args.needs[1];

        // per-sample weight gradients, reduced in sample order for determinism
        let per_sample = |b: usize, dx_n: Option<&mut [T]>| -> Option<Vec<T>> {
            let x_n = &xd[b * cin * h * w..(b + 1) * cin * h * w];
            let dy_n = &dy[b * cout * ohw..(b + 1) * cout * ohw];
            if let Some(dx_n) = dx_n {
                if geo.pointwise() {
                    T::gemm(k, cout, ohw, wd, true, dy_n, false, T::zero(), dx_n);
                } else {
                    let mut dcol = vec![T::zero(); k * ohw];
                    T::gemm(k, cout, ohw, wd, true, dy_n, false, T::zero(), &mut dcol);
                    geo.col2im(&dcol, dx_n);
                }
            }
            need_dw.then(|| {
                let mut dw = vec![T::zero(); cout * k];
                if geo.pointwise() {
                    T::gemm(cout, ohw, k, dy_n, false, x_n, true, T::zero(), &mut dw);
                } else {
                    let mut col = vec![T::zero(); k * ohw];
                    geo.im2col(x_n, &mut col);
                    T::gemm(cout, ohw, k, dy_n, false, &col, true, T::zero(), &mut dw);
                }
                dw
            })
        };
        let partials: Vec<Option<Vec<T>>> = if need_dx {
            dx.par_chunks_mut(cin * h * w)
                .enumerate()
                .map(|(b, dx_n)| per_sample(b, Some(dx_n)))
                .collect()
        } else {
            (0..n).into_par_iter().map(|b| per_sample(b, None)).collect()
        };
        let dw = need_dw.then(|| {
            let mut acc = vec![T::zero(); cout * k];
            for part in partials.into_iter().flatten() {
                acc.iter_mut().zip(&part).for_each(|(a, p)| *a += *p);
            }
            acc
        });

        let mut grads = vec![need_dx.then_some(dx), dw];
        if args.inputs.len() == 3 {
            grads.push(args.needs[2].then(|| {
                let mut db = vec![T::zero(); cout];
                for dy_n in dy.chunks(cout * ohw) {
                    for (acc, plane) in db.iter_mut().zip(dy_n.chunks(ohw)) {
                        *acc += plane.iter().copied().sum::<T>();
                    }
                }
                db
            }));
        }
        grads
    }))
}

/// 1-D zero-padded convolution across the channel axis of `z: [N, C]` or
/// `[N, C, 1]` with an odd-length kernel, as used by ECA-style heads.
pub fn channel_conv1d<'g, T: Float>(z: Var<'g, T>, kernel: Var<'g, T>) -> Result<Var<'g, T>> {
    let (zv, kv) = (z.value(), kernel.value());
    let shape = zv.shape().to_vec();
    if shape.len() < 2 || shape[2..].iter().any(|&d| d != 1) {
        return Err(Error::dim(format!(
            "channel_conv1d expects [N, C] or [N, C, 1], got {shape:?}"
        )));
    }
    let len = kv.numel();
    if kv.rank() != 1 || len % 2 == 0 {
        return Err(Error::dim(format!(
            "channel_conv1d kernel must be 1-D with odd length, got {:?}",
            kv.shape()
        )));
    }
    let (n, c) = (shape[0], shape[1]);
    let half = len / 2;
    // tap j of the kernel reads channel ch + j − half
    let source = move |ch: usize, j: usize| (ch + j).checked_sub(half).filter(|&s| s < c);
    let mut out = vec![T::zero(); n * c];
    for b in 0..n {
        for ch in 0..c {
            let mut acc = T::zero();
            for j in 0..len {
                if let Some(s) = source(ch, j) {
                    acc += kv.data()[j] * zv.data()[b * c + s];
                }
            }
            out[b * c + ch] = acc;
        }
    }
    let out = Tensor::from_vec(shape, out)?;
    Ok(z.graph().record(out, &[z, kernel], move |args| {
        let (zd, kd) = (args.inputs[0].data(), args.inputs[1].data());
        let mut dz = vec![T::zero(); n * c];
        let mut dk = vec![T::zero(); len];
        for b in 0..n {
            for ch in 0..c {
                let g = args.grad[b * c + ch];
                for j in 0..len {
                    if let Some(s) = source(ch, j) {
                        dz[b * c + s] += kd[j] * g;
                        dk[j] += zd[b * c + s] * g;
                    }
                }
            }
        }
        vec![args.needs[0].then_some(dz), args.needs[1].then_some(dk)]
    }))
}
