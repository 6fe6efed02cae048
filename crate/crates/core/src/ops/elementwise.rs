use rand::Rng;

use super::same_shape;
use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

impl<'g, T: Float> Var<'g, T> {
    pub fn add(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), other.value());
        same_shape(a.shape(), b.shape(), "add")?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| *x + *y).collect();
        let out = Tensor::from_vec(a.shape().to_vec(), data)?;
        Ok(self.graph().record(out, &[self, other], |args| {
            vec![Some(args.grad.to_vec()), Some(args.grad.to_vec())]
        }))
    }

    pub fn mul(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), other.value());
        same_shape(a.shape(), b.shape(), "mul")?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| *x * *y).collect();
        let out = Tensor::from_vec(a.shape().to_vec(), data)?;
        Ok(self.graph().record(out, &[self, other], |args| {
            let (a, b) = (args.inputs[0].data(), args.inputs[1].data());
            let ga = args.needs[0]
                .then(|| args.grad.iter().zip(b).map(|(g, y)| *g * *y).collect());
            let gb = args.needs[1]
                .then(|| args.grad.iter().zip(a).map(|(g, x)| *g * *x).collect());
            vec![ga, gb]
        }))
    }

    pub fn scale(self, factor: T) -> Var<'g, T> {
        let out = self.value().map(|v| v * factor);
        self.graph().record(out, &[self], move |args| {
            vec![Some(args.grad.iter().map(|g| *g * factor).collect())]
        })
    }

    pub fn relu(self) -> Var<'g, T> {
        let x = self.value();
        let kink = x
            .data()
            .iter()
            .map(|v| v.abs().as_f64())
            .fold(f64::INFINITY, f64::min);
        self.graph().note_kink(kink);
        let out = x.map(|v| if v > T::zero() { v } else { T::zero() });
        self.graph().record(out, &[self], |args| {
            let grad = args
                .grad
                .iter()
                .zip(args.inputs[0].data())
                .map(|(g, x)| if *x > T::zero() { *g } else { T::zero() })
                .collect();
            vec![Some(grad)]
        })
    }

    pub fn sigmoid(self) -> Var<'g, T> {
        let out = self.value().map(sigmoid);
        self.graph().record(out, &[self], |args| {
            let grad = args
                .grad
                .iter()
                .zip(args.output.data())
                .map(|(g, s)| *g * *s * (T::one() - *s))
                .collect();
            vec![Some(grad)]
        })
    }

    /// Inverted dropout: survivors are scaled by `1/(1-rate)` during
    /// training, so evaluation is the identity.
    pub fn dropout<R: Rng + ?Sized>(
        self,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var<'g, T>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::arg(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(self);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let x = self.value();
        let mask: Vec<T> = (0..x.numel())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(v, m)| *v * *m).collect();
        let out = Tensor::from_vec(x.shape().to_vec(), data)?;
        Ok(self.graph().record(out, &[self], move |args| {
            vec![Some(args.grad.iter().zip(&mask).map(|(g, m)| *g * *m).collect())]
        }))
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(self) -> Var<'g, T> {
        let x = self.value();
        let n = x.numel();
        self.graph()
            .record(Tensor::scalar(x.sum()), &[self], move |args| {
                vec![Some(vec![args.grad[0]; n])]
            })
    }

    pub fn mean(self) -> Var<'g, T> {
        let n = self.value().numel();
        self.sum().scale(T::one() / T::lit(n as f64))
    }

    /// `x[n, c, ...] * gate[n, c]`, with the gate broadcast over all trailing
    /// axes of `x`. The gate may be `[N, C]` or `[N, C, 1]`.
    pub fn scale_channels(self, gate: Var<'g, T>) -> Result<Var<'g, T>> {
        let (x, g) = (self.value(), gate.value());
        let xs = x.shape();
        let gs = g.shape();
        let gate_ok = xs.len() >= 2
            && gs.len() >= 2
            && gs[0] == xs[0]
            && gs[1] == xs[1]
            && gs[2..].iter().all(|&d| d == 1);
        if !gate_ok {
            return Err(Error::dim(format!(
                "gate shape {gs:?} does not broadcast over {xs:?}"
            )));
        }
        let inner: usize = xs[2..].iter().product();
        let mut data = x.data().to_vec();
        for (chunk, &s) in data.chunks_mut(inner).zip(g.data()) {
            chunk.iter_mut().for_each(|v| *v *= s);
        }
        let out = Tensor::from_vec(xs.to_vec(), data)?;
        Ok(self.graph().record(out, &[self, gate], move |args| {
            let (x, g) = (args.inputs[0].data(), args.inputs[1].data());
            let gx = args.needs[0].then(|| {
                let mut gx = args.grad.to_vec();
                for (chunk, &s) in gx.chunks_mut(inner).zip(g) {
                    chunk.iter_mut().for_each(|v| *v *= s);
                }
                gx
            });
            let gg = args.needs[1].then(|| {
                args.grad
                    .chunks(inner)
                    .zip(x.chunks(inner))
                    .map(|(dy, xv)| dy.iter().zip(xv).map(|(a, b)| *a * *b).sum())
                    .collect()
            });
            vec![gx, gg]
        }))
    }
}

#[inline]
pub(crate) fn sigmoid<T: Float>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use crate::autograd::Graph;
    use crate::rng::SeededRng;
    use crate::tensor::Tensor;

    #[test]
    fn sigmoid_and_relu_definitions() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_f64s([3], &[0.0, -1.0, 2.0]).unwrap());
        assert_eq!(x.sigmoid().value().data()[0], 0.5);
        assert_eq!(x.relu().value().data(), &[0.0, 0.0, 2.0]);
        assert_eq!(g.kink_distance(), 0.0);
    }

    #[test]
    fn zero_rate_dropout_is_identity() {
        let g = Graph::<f64>::new();
        let mut rng = SeededRng::seed_from_u64(0);
        let t = Tensor::uniform([4, 5], -1.0, 1.0, &mut rng);
        let x = g.constant(t.clone());
        let y = x.dropout(0.0, true, &mut rng).unwrap();
        assert_eq!(*y.value(), t);
        let y = x.dropout(0.7, false, &mut rng).unwrap();
        assert_eq!(*y.value(), t);
        assert!(x.dropout(1.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_is_unbiased() {
        // Mean over 10^4 Bernoulli masks within 3 standard errors of the input.
        let g = Graph::<f64>::new();
        let mut rng = SeededRng::seed_from_u64(11);
        let trials = 10_000;
        let x = g.constant(Tensor::full([trials], 2.0));
        let y = x.dropout(0.5, true, &mut rng).unwrap().value();
        let mean = y.mean();
        // each sample is 0 or 4 with p = 1/2: std = 2
        let se = 2.0 / (trials as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn sum_and_square_gradients() {
        let g = Graph::<f64>::new();
        let mut rng = SeededRng::seed_from_u64(3);
        let t = Tensor::uniform([2, 3, 4], -1.0, 1.0, &mut rng);
        let x = g.leaf(t.clone(), true);
        g.backward(x.sum()).unwrap();
        assert!(x.grad().unwrap().data().iter().all(|&v| v == 1.0));

        let g = Graph::<f64>::new();
        let x = g.leaf(t.clone(), true);
        g.backward(x.mul(x).unwrap().sum()).unwrap();
        assert_eq!(x.grad().unwrap(), t.map(|v| 2.0 * v));
    }

    #[test]
    fn gate_broadcast_rejects_bad_shapes() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::ones([2, 3, 4, 4]));
        assert!(x.scale_channels(g.constant(Tensor::ones([2, 3, 1]))).is_ok());
        assert!(x.scale_channels(g.constant(Tensor::ones([2, 3]))).is_ok());
        assert!(x.scale_channels(g.constant(Tensor::ones([2, 4, 1]))).is_err());
    }
}
