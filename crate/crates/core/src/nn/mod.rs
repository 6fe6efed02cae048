//! Parameters, layers and the traversal trait every model part implements.

mod layers;

pub use layers::{BatchNorm, Conv2d, Linear};

use crate::autograd::Graph;
use crate::rng::SeededRng;
use crate::tensor::{Float, Tensor};

/// Which part of a network a parameter belongs to. The adapter paradigm
/// freezes `Backbone` and trains the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamRole {
    Backbone,
    Attention,
    Head,
}

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
    pub role: ParamRole,
    pub trainable: bool,
    /// Whether weight decay applies (off for normalization and fusion weights).
    pub decay: bool,
}

impl<T: Float> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>, role: ParamRole) -> Self {
        Param {
            name: name.into(),
            value,
            grad: None,
            role,
            trainable: true,
            decay: true,
        }
    }

    pub fn without_decay(mut self) -> Self {
        self.decay = false;
        self
    }

    pub fn var<'g>(&self, g: &'g Graph<T>) -> crate::autograd::Var<'g, T> {
        g.param(&self.name, &self.value, self.trainable)
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }
}

/// Forward-pass mode. Training carries the generator that dropout draws from.
pub enum Mode<'r> {
    Train(&'r mut SeededRng),
    Eval,
}

impl Mode<'_> {
    pub fn training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }

    pub fn rng(&mut self) -> Option<&mut SeededRng> {
        match self {
            Mode::Train(rng) => Some(rng),
            Mode::Eval => None,
        }
    }
}

/// Anything holding named parameters and buffers.
pub trait Module<T: Float> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>));

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>));

    /// Non-learnable state such as normalization running statistics.
    fn visit_buffers<'a>(&'a self, _f: &mut dyn FnMut(&'a str, &'a Tensor<T>)) {}

    fn visit_buffers_mut(&mut self, _f: &mut dyn FnMut(&str, &mut Tensor<T>)) {}

    /// Every batch normalization layer inside the module.
    fn visit_norms_mut(&mut self, _f: &mut dyn FnMut(&mut BatchNorm<T>)) {}

    /// Learnable scalar count; buffers are excluded.
    fn param_count(&self) -> usize {
        let mut total = 0;
        self.visit_params(&mut |p| total += p.numel());
        total
    }

    fn param_count_by_role(&self, role: ParamRole) -> usize {
        let mut total = 0;
        self.visit_params(&mut |p| {
            if p.role == role {
                total += p.numel()
            }
        });
        total
    }

    /// Adds the gradients `g` computed for this module's parameters into
    /// their `grad` buffers. Frozen parameters are never touched.
    fn collect_grads(&mut self, g: &Graph<T>) {
        self.visit_params_mut(&mut |p| {
            if !p.trainable {
                return;
            }
            let Some(grad) = g.param_var(&p.name).and_then(|v| v.grad()) else {
                return;
            };
            match &mut p.grad {
                Some(acc) => acc
                    .data_mut()
                    .iter_mut()
                    .zip(grad.data())
                    .for_each(|(a, b)| *a += *b),
                slot => *slot = Some(grad),
            }
        });
    }

    fn zero_grads(&mut self) {
        self.visit_params_mut(&mut |p| p.grad = None);
    }
}
