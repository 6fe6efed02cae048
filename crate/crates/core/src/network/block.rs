use crate::attention::{Attention, AttentionSpec};
use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::nn::{BatchNorm, Conv2d, Mode, Module, Param, ParamRole};
use crate::rng::SeededRng;
use crate::tensor::{Float, Tensor};

use super::arch::BlockKind;

pub(crate) const BN_EPS: f64 = 1e-5;

/// Convolution without bias followed by affine batch norm.
#[derive(Debug, Clone)]
pub struct ConvBn<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm<T>,
}

impl<T: Float> ConvBn<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let role = ParamRole::Backbone;
        ConvBn {
            conv: Conv2d::new(&format!("{name}.conv"), cin, cout, kernel, stride, kernel / 2, false, role, rng),
            bn: BatchNorm::new(&format!("{name}.bn"), cout, true, BN_EPS, role),
        }
    }

    pub fn forward<'g>(&mut self, g: &'g Graph<T>, x: Var<'g, T>, mode: &Mode<'_>) -> Result<Var<'g, T>> {
        let y = self.conv.forward(g, x)?;
        self.bn.forward(g, y, mode)
    }
}

impl<T: Float> Module<T> for ConvBn<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        self.conv.visit_params(f);
        self.bn.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.conv.visit_params_mut(f);
        self.bn.visit_params_mut(f);
    }

    fn visit_buffers<'a>(&'a self, f: &mut dyn FnMut(&'a str, &'a Tensor<T>)) {
        self.bn.visit_buffers(f);
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.bn.visit_buffers_mut(f);
    }

    fn visit_norms_mut(&mut self, f: &mut dyn FnMut(&mut BatchNorm<T>)) {
        self.bn.visit_norms_mut(f);
    }
}

/// Residual block: conv-BN(-relu) layers, optional attention after the last
/// BN, skip addition, relu.
#[derive(Debug, Clone)]
pub struct Block<T> {
    pub name: String,
    pub kind: BlockKind,
    pub layers: Vec<ConvBn<T>>,
    pub attention: Option<Attention<T>>,
    pub downsample: Option<ConvBn<T>>,
}

/// What one block forward exposes besides its output.
pub struct BlockTrace<'g, T> {
    pub output: Var<'g, T>,
    /// The map fed to the attention module, when there is one.
    pub attention_input: Option<Var<'g, T>>,
}

impl<T: Float> Block<T> {
    pub fn new(
        name: &str,
        kind: BlockKind,
        cin: usize,
        width: usize,
        stride: usize,
        attention: &AttentionSpec,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let cout = width * kind.expansion();
        let layers = match kind {
            BlockKind::Basic => vec![
                ConvBn::new(&format!("{name}.0"), cin, width, 3, stride, rng),
                ConvBn::new(&format!("{name}.1"), width, width, 3, 1, rng),
            ],
            BlockKind::Bottleneck => vec![
                ConvBn::new(&format!("{name}.0"), cin, width, 1, 1, rng),
                ConvBn::new(&format!("{name}.1"), width, width, 3, stride, rng),
                ConvBn::new(&format!("{name}.2"), width, cout, 1, 1, rng),
            ],
        };
        let downsample = (stride != 1 || cin != cout)
            .then(|| ConvBn::new(&format!("{name}.downsample"), cin, cout, 1, stride, rng));
        let attention = Attention::build(attention, &format!("{name}.attn"), cout, rng)?;
        Ok(Block { name: name.to_string(), kind, layers, attention, downsample })
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().expect("blocks have layers").conv.out_channels()
    }

    pub fn forward<'g>(
        &mut self,
        g: &'g Graph<T>,
        x: Var<'g, T>,
        mode: &mut Mode<'_>,
    ) -> Result<BlockTrace<'g, T>> {
        let last = self.layers.len() - 1;
        let mut y = x;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            y = layer.forward(g, y, mode)?;
            if i < last {
                y = y.relu();
            }
        }
        let attention_input = self.attention.is_some().then_some(y);
        if let Some(att) = &mut self.attention {
            y = att.forward(g, y, mode)?;
        }
        let skip = match &mut self.downsample {
            Some(ds) => ds.forward(g, x, mode)?,
            None => x,
        };
        Ok(BlockTrace { output: y.add(skip)?.relu(), attention_input })
    }
}

impl<T: Float> Module<T> for Block<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        self.layers.iter().for_each(|l| l.visit_params(f));
        if let Some(a) = &self.attention {
            a.visit_params(f);
        }
        if let Some(d) = &self.downsample {
            d.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.layers.iter_mut().for_each(|l| l.visit_params_mut(f));
        if let Some(a) = &mut self.attention {
            a.visit_params_mut(f);
        }
        if let Some(d) = &mut self.downsample {
            d.visit_params_mut(f);
        }
    }

    fn visit_buffers<'a>(&'a self, f: &mut dyn FnMut(&'a str, &'a Tensor<T>)) {
        self.layers.iter().for_each(|l| l.visit_buffers(f));
        if let Some(a) = &self.attention {
            a.visit_buffers(f);
        }
        if let Some(d) = &self.downsample {
            d.visit_buffers(f);
        }
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.layers.iter_mut().for_each(|l| l.visit_buffers_mut(f));
        if let Some(a) = &mut self.attention {
            a.visit_buffers_mut(f);
        }
        if let Some(d) = &mut self.downsample {
            d.visit_buffers_mut(f);
        }
    }

    fn visit_norms_mut(&mut self, f: &mut dyn FnMut(&mut BatchNorm<T>)) {
        self.layers.iter_mut().for_each(|l| l.visit_norms_mut(f));
        if let Some(a) = &mut self.attention {
            a.visit_norms_mut(f);
        }
        if let Some(d) = &mut self.downsample {
            d.visit_norms_mut(f);
        }
    }
}
