use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

impl<'g, T: Float> Var<'g, T> {
    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'g, T>> {
        let out = (*self.value()).clone().reshape(shape)?;
        Ok(self
            .graph()
            .record(out, &[self], |args| vec![Some(args.grad.to_vec())]))
    }

    /// Concatenates along the last axis. All parts must agree on the leading
    /// axes.
    pub fn concat_last(parts: &[Var<'g, T>]) -> Result<Var<'g, T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::arg("concat of zero tensors"))?;
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let lead = &values[0].shape()[..values[0].rank() - 1];
        for v in &values {
            if v.rank() != lead.len() + 1 || &v.shape()[..lead.len()] != lead {
                return Err(Error::dim(format!(
                    "concat: {:?} incompatible with leading axes {lead:?}",
                    v.shape()
                )));
            }
        }
        let widths: Vec<usize> = values.iter().map(|v| v.shape()[lead.len()]).collect();
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (v, &w) in values.iter().zip(&widths) {
                data.extend_from_slice(&v.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let out = Tensor::from_vec(shape, data)?;
        Ok(first.graph().record(out, parts, move |args| {
            let mut grads: Vec<Vec<T>> = widths.iter().map(|&w| Vec::with_capacity(rows * w)).collect();
            for r in 0..rows {
                let mut offset = r * total;
                for (g, &w) in grads.iter_mut().zip(&widths) {
                    g.extend_from_slice(&args.grad[offset..offset + w]);
                    offset += w;
                }
            }
            grads.into_iter().map(Some).collect()
        }))
    }

    /// Slice `[start, start+len)` of the last axis.
    pub fn narrow_last(self, start: usize, len: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        let width = *x.shape().last().expect("rank >= 1");
        if len == 0 || start + len > width {
            return Err(Error::arg(format!(
                "narrow [{start}, {}) outside last axis of size {width}",
                start + len
            )));
        }
        let rows = x.numel() / width;
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&x.data()[r * width + start..r * width + start + len]);
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let out = Tensor::from_vec(shape, data)?;
        Ok(self.graph().record(out, &[self], move |args| {
            let mut g = vec![T::zero(); rows * width];
            for r in 0..rows {
                g[r * width + start..r * width + start + len]
                    .copy_from_slice(&args.grad[r * len..(r + 1) * len]);
            }
            vec![Some(g)]
        }))
    }

    /// `[A, B, C] -> [A, C, B]`.
    pub fn transpose_last2(self) -> Result<Var<'g, T>> {
        let x = self.value();
        super::expect_rank(x.shape(), 3, "transpose_last2")?;
        let (a, b, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let out = Tensor::from_vec([a, c, b], transpose3(x.data(), a, b, c))?;
        Ok(self.graph().record(out, &[self], move |args| {
            vec![Some(transpose3(args.grad, a, c, b))]
        }))
    }

    /// Sums out one axis, removing it.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        if axis >= x.rank() || x.rank() == 1 {
            return Err(Error::arg(format!(
                "cannot sum axis {axis} of shape {:?}",
                x.shape()
            )));
        }
        let outer: usize = x.shape()[..axis].iter().product();
        let len = x.shape()[axis];
        let inner: usize = x.shape()[axis + 1..].iter().product();
        let mut data = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &x.data()[(o * len + l) * inner..(o * len + l + 1) * inner];
                data[o * inner..(o + 1) * inner]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(d, s)| *d += *s);
            }
        }
        let mut shape = x.shape().to_vec();
        shape.remove(axis);
        let out = Tensor::from_vec(shape, data)?;
        Ok(self.graph().record(out, &[self], move |args| {
            let mut g = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                for _ in 0..len {
                    g.extend_from_slice(&args.grad[o * inner..(o + 1) * inner]);
                }
            }
            vec![Some(g)]
        }))
    }
}

fn transpose3<T: Copy>(src: &[T], a: usize, b: usize, c: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for i in 0..a {
        for k in 0..c {
            for j in 0..b {
                out.push(src[(i * b + j) * c + k]);
            }
        }
    }
    out
}
