use super::{Mode, Module, Param, ParamRole};
use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::ops::{self, RunningStats};
use crate::rng::SeededRng;
use crate::tensor::{Float, Tensor};

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Float> Conv2d<T> {
    /// He-uniform weights, `U(±√(6/fan_in))`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        role: ParamRole,
        rng: &mut SeededRng,
    ) -> Self {
        let fan_in = (cin * kernel * kernel) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let weight = Tensor::uniform([cout, cin, kernel, kernel], -bound, bound, rng);
        let bias = bias.then(|| {
            let b = 1.0 / fan_in.sqrt();
            Param::new(format!("{name}.bias"), Tensor::uniform([cout], -b, b, rng), role)
        });
        Conv2d {
            weight: Param::new(format!("{name}.weight"), weight, role),
            bias,
            stride,
            padding,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape()[2]
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let w = self.weight.var(g);
        let b = self.bias.as_ref().map(|b| b.var(g));
        ops::conv2d(x, w, b, self.stride, self.padding)
    }
}

impl<T: Float> Module<T> for Conv2d<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

/// Batch normalization over channels (axis 1).
///
/// An affine layer whose scale and shift are both frozen behaves as a fixed
/// function: it normalizes with its running statistics even in training mode
/// and never updates them.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub gamma: Option<Param<T>>,
    pub beta: Option<Param<T>>,
    pub stats: RunningStats<T>,
    pub eps: f64,
    pub momentum: f64,
    mean_name: String,
    var_name: String,
}

impl<T: Float> BatchNorm<T> {
    pub fn new(name: &str, channels: usize, affine: bool, eps: f64, role: ParamRole) -> Self {
        let (gamma, beta) = if affine {
            (
                Some(Param::new(format!("{name}.weight"), Tensor::ones([channels]), role).without_decay()),
                Some(Param::new(format!("{name}.bias"), Tensor::zeros([channels]), role).without_decay()),
            )
        } else {
            (None, None)
        };
        BatchNorm {
            gamma,
            beta,
            stats: RunningStats::new(channels),
            eps,
            momentum: 0.1,
            mean_name: format!("{name}.running_mean"),
            var_name: format!("{name}.running_var"),
        }
    }

    pub fn frozen(&self) -> bool {
        let params: Vec<_> = self.gamma.iter().chain(&self.beta).collect();
        !params.is_empty() && params.iter().all(|p| !p.trainable)
    }

    pub fn forward<'g>(
        &mut self,
        g: &'g Graph<T>,
        x: Var<'g, T>,
        mode: &Mode<'_>,
    ) -> Result<Var<'g, T>> {
        let training = mode.training() && !self.frozen();
        let gamma = self.gamma.as_ref().map(|p| p.var(g));
        let beta = self.beta.as_ref().map(|p| p.var(g));
        ops::batch_norm(x, gamma, beta, &mut self.stats, training, self.eps, self.momentum)
    }
}

impl<T: Float> Module<T> for BatchNorm<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        self.gamma.iter().chain(&self.beta).for_each(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.gamma.iter_mut().chain(&mut self.beta).for_each(f);
    }

    fn visit_buffers<'a>(&'a self, f: &mut dyn FnMut(&'a str, &'a Tensor<T>)) {
        f(&self.mean_name, &self.stats.mean);
        f(&self.var_name, &self.stats.var);
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        f(&self.mean_name, &mut self.stats.mean);
        f(&self.var_name, &mut self.stats.var);
    }

    fn visit_norms_mut(&mut self, f: &mut dyn FnMut(&mut BatchNorm<T>)) {
        f(self)
    }
}

#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
}

impl<T: Float> Linear<T> {
    /// `U(±1/√fan_in)` for weight and bias.
    pub fn new(
        name: &str,
        din: usize,
        dout: usize,
        bias: bool,
        role: ParamRole,
        rng: &mut SeededRng,
    ) -> Self {
        let bound = 1.0 / (din as f64).sqrt();
        let weight = Tensor::uniform([dout, din], -bound, bound, rng);
        let bias = bias.then(|| {
            Param::new(format!("{name}.bias"), Tensor::uniform([dout], -bound, bound, rng), role)
        });
        Linear {
            weight: Param::new(format!("{name}.weight"), weight, role),
            bias,
        }
    }

    pub fn zero_init(&mut self) {
        self.weight.value.data_mut().fill(T::zero());
        if let Some(b) = &mut self.bias {
            b.value.data_mut().fill(T::zero());
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        ops::linear(x, self.weight.var(g), self.bias.as_ref().map(|b| b.var(g)))
    }
}

impl<T: Float> Module<T> for Linear<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}
