use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::Module;
use crate::tensor::{Float, Tensor};

/// SGD with momentum and L2 weight decay added to the gradient:
/// `v ← μ v + (g + λ p)`, `p ← p − lr · v`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub momentum: f64,
    pub weight_decay: f64,
    /// Apply decay to parameters flagged as exempt (normalization and
    /// fusion weights) as well.
    pub decay_all: bool,
    velocity: HashMap<String, Tensor<T>>,
}

impl<T: Float> Sgd<T> {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Sgd { momentum, weight_decay, decay_all: false, velocity: HashMap::new() }
    }

    /// Updates every trainable parameter that has a gradient. Nothing is
    /// changed if any gradient is non-finite.
    pub fn step<M: Module<T> + ?Sized>(&mut self, model: &mut M, lr: f64) -> Result<()> {
        let mut bad = None;
        model.visit_params(&mut |p| {
            if bad.is_none() && p.trainable {
                if let Some(g) = &p.grad {
                    if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
                        bad = Some(format!("non-finite gradient in '{}' at element {i}", p.name));
                    }
                }
            }
        });
        if let Some(msg) = bad {
            return Err(Error::Training(msg));
        }
        let (mu, lr) = (T::lit(self.momentum), T::lit(lr));
        let (wd, decay_all) = (self.weight_decay, self.decay_all);
        let velocity = &mut self.velocity;
        model.visit_params_mut(&mut |p| {
            if !p.trainable {
                return;
            }
            let Some(grad) = &p.grad else { return };
            let lambda = if p.decay || decay_all { T::lit(wd) } else { T::zero() };
            let v = velocity
                .entry(p.name.clone())
                .or_insert_with(|| Tensor::zeros(p.value.shape().to_vec()));
            for ((v, w), g) in v.data_mut().iter_mut().zip(p.value.data_mut()).zip(grad.data()) {
                *v = mu * *v + (*g + lambda * *w);
                *w = *w - lr * *v;
            }
        });
        Ok(())
    }
}
