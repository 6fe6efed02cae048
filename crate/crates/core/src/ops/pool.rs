use super::expect_rank;
use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

/// Bin `i` of `k` over an axis of length `len`:
/// `[floor(i·len/k), ceil((i+1)·len/k))`.
pub fn adaptive_bin(i: usize, k: usize, len: usize) -> (usize, usize) {
    let start = i * len / k;
    let end = ((i + 1) * len).div_ceil(k);
    (start, end)
}

impl<'g, T: Float> Var<'g, T> {
    /// Adaptive average pooling of `[N, C, H, W]` to `[N, C, k, k]`.
    pub fn adaptive_avg_pool(self, k: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        expect_rank(x.shape(), 4, "adaptive_avg_pool")?;
        let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        if k == 0 || k > h || k > w {
            return Err(Error::arg(format!(
                "pool size {k} not in [1, min({h}, {w})]"
            )));
        }
        let planes = n * c;
        let mut out = Vec::with_capacity(planes * k * k);
        for plane in x.data().chunks(h * w) {
            for i in 0..k {
                let (r0, r1) = adaptive_bin(i, k, h);
                for j in 0..k {
                    let (c0, c1) = adaptive_bin(j, k, w);
                    let mut acc = T::zero();
                    for r in r0..r1 {
                        for v in &plane[r * w + c0..r * w + c1] {
                            acc += *v;
                        }
                    }
                    out.push(acc / T::lit(((r1 - r0) * (c1 - c0)) as f64));
                }
            }
        }
        let out = Tensor::from_vec([n, c, k, k], out)?;
        Ok(self.graph().record(out, &[self], move |args| {
            let mut g = vec![T::zero(); planes * h * w];
            for (p, plane) in g.chunks_mut(h * w).enumerate() {
                for i in 0..k {
                    let (r0, r1) = adaptive_bin(i, k, h);
                    for j in 0..k {
                        let (c0, c1) = adaptive_bin(j, k, w);
                        let share = args.grad[(p * k + i) * k + j]
                            / T::lit(((r1 - r0) * (c1 - c0)) as f64);
                        for r in r0..r1 {
                            plane[r * w + c0..r * w + c1]
                                .iter_mut()
                                .for_each(|v| *v += share);
                        }
                    }
                }
            }
            vec![Some(g)]
        }))
    }

    /// `[N, C, H, W] -> [N, C]`.
    pub fn global_avg_pool(self) -> Result<Var<'g, T>> {
        let shape = self.shape();
        expect_rank(&shape, 4, "global_avg_pool")?;
        self.adaptive_avg_pool(1)?.reshape([shape[0], shape[1]])
    }

    /// Max pooling with square window; padding cells never win.
    pub fn max_pool2d(self, kernel: usize, stride: usize, padding: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        expect_rank(x.shape(), 4, "max_pool2d")?;
        let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        if stride == 0 || kernel == 0 || kernel > h + 2 * padding || kernel > w + 2 * padding {
            return Err(Error::arg("max_pool2d window does not fit"));
        }
        let oh = (h + 2 * padding - kernel) / stride + 1;
        let ow = (w + 2 * padding - kernel) / stride + 1;
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        // gap between the winner and the runner-up: the distance to a point
        // where the routing of the gradient changes
        let mut margin = f64::INFINITY;
        for (p, plane) in x.data().chunks(h * w).enumerate() {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut second = T::neg_infinity();
                    let mut at = 0;
                    for i in 0..kernel {
                        let Some(y) = (oy * stride + i).checked_sub(padding).filter(|&y| y < h)
                        else {
                            continue;
                        };
                        for j in 0..kernel {
                            let Some(xx) =
                                (ox * stride + j).checked_sub(padding).filter(|&v| v < w)
                            else {
                                continue;
                            };
                            let v = plane[y * w + xx];
                            if v > best {
                                second = best;
                                best = v;
                                at = y * w + xx;
                            } else if v > second {
                                second = v;
                            }
                        }
                    }
                    margin = margin.min((best - second).as_f64());
                    out.push(best);
                    argmax.push(p * h * w + at);
                }
            }
        }
        self.graph().note_kink(margin);
        let out = Tensor::from_vec([n, c, oh, ow], out)?;
        let len = n * c * h * w;
        Ok(self.graph().record(out, &[self], move |args| {
            let mut g = vec![T::zero(); len];
            for (&src, &dy) in argmax.iter().zip(args.grad) {
                g[src] += dy;
            }
            vec![Some(g)]
        }))
    }
}
