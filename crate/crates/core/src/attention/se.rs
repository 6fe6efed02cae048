use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{Linear, Module, Param, ParamRole};
use crate::rng::SeededRng;
use crate::tensor::Float;

/// Hidden width of a reduction MLP: `ceil(channels / reduction)`, at least 1.
pub fn reduced_width(channels: usize, reduction: usize) -> usize {
    channels.div_ceil(reduction.max(1)).max(1)
}

/// Squeeze-and-excitation: global average pool, `C → C/r → C` MLP with relu
/// and sigmoid, channel rescaling.
#[derive(Debug, Clone)]
pub struct SqueezeExcitation<T> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    pub reduction: usize,
}

impl<T: Float> SqueezeExcitation<T> {
    pub fn new(name: &str, channels: usize, reduction: usize, rng: &mut SeededRng) -> Self {
        let hidden = reduced_width(channels, reduction);
        let role = ParamRole::Attention;
        SqueezeExcitation {
            fc1: Linear::new(&format!("{name}.fc1"), channels, hidden, true, role, rng),
            fc2: Linear::new(&format!("{name}.fc2"), hidden, channels, true, role, rng),
            reduction,
        }
    }

    pub fn channels(&self) -> usize {
        self.fc1.in_features()
    }

    pub fn gate<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let shape = x.shape();
        if shape.len() != 4 || shape[1] != self.channels() {
            return Err(Error::dim(format!(
                "squeeze-excitation over {} channels got {shape:?}",
                self.channels()
            )));
        }
        let squeezed = x.global_avg_pool()?;
        let hidden = self.fc1.forward(g, squeezed)?.relu();
        Ok(self.fc2.forward(g, hidden)?.sigmoid())
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let gate = self.gate(g, x)?;
        x.scale_channels(gate)
    }

    pub fn flops(&self, h: usize, w: usize) -> u64 {
        let c = self.channels() as u64;
        let hidden = self.fc1.out_features() as u64;
        let plane = c * (h * w) as u64;
        plane + 2 * c * hidden + hidden + 2 * hidden * c + c + plane
    }
}

impl<T: Float> Module<T> for SqueezeExcitation<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        self.fc1.visit_params(f);
        self.fc2.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.fc1.visit_params_mut(f);
        self.fc2.visit_params_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::tensor::Tensor;

    #[test]
    fn param_count_with_biases() {
        let se = SqueezeExcitation::<f32>::new("se", 64, 16, &mut seeded(0));
        assert_eq!(se.param_count(), 2 * 64 * 4 + 4 + 64);
        assert_eq!(se.param_count(), 580);
    }

    #[test]
    fn zero_weights_halve_the_input() {
        let mut se = SqueezeExcitation::<f64>::new("se", 8, 4, &mut seeded(0));
        se.visit_params_mut(&mut |p| p.value.data_mut().fill(0.0));
        let g = Graph::new();
        let mut rng = seeded(1);
        let t = Tensor::uniform([2, 8, 3, 3], -1.0, 1.0, &mut rng);
        let y = se.forward(&g, g.constant(t.clone())).unwrap().value();
        assert_eq!(*y, t.map(|v| v * 0.5));
    }

    #[test]
    fn indivisible_channels_round_up() {
        assert_eq!(reduced_width(16, 16), 1);
        assert_eq!(reduced_width(20, 16), 2);
        assert_eq!(reduced_width(3, 16), 1);
    }
}
