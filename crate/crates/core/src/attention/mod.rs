//! Channel attention modules.
//!
//! [`Epca`] is the pyramid attention with its four fusion variants;
//! [`SqueezeExcitation`] is the classic baseline; [`ChannelDependency`]
//! holds the channel-mixing alternatives (MLP, shared MLP, channel conv)
//! that replace linear fusion in ablations.

mod channel_dep;
mod config;
mod epca;
mod fusion;
mod pyramid;
mod se;

pub use channel_dep::{ChannelDepKind, ChannelDependency, CIC_KERNEL};
pub use config::{parse_sizes, BranchCombine, EpcaConfig, FusionVariant};
pub use epca::{Epca, FusionParams};
pub use fusion::{mcf, scfm_dropout, scfm_hierarchical, scfm_linear, scfm_parallel};
pub use pyramid::{pyramid_pool, PyramidContext};
pub use se::{reduced_width, SqueezeExcitation};

use std::fmt;

use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::nn::{BatchNorm, Mode, Module, Param};
use crate::rng::SeededRng;
use crate::tensor::{Float, Tensor};

pub const DEFAULT_REDUCTION: usize = 16;

/// Which attention module a residual block carries.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum AttentionSpec {
    #[default]
    None,
    Epca(EpcaConfig),
    Se { reduction: usize },
    ChannelDep { kind: ChannelDepKind, sizes: Vec<usize>, reduction: usize },
}

impl fmt::Display for AttentionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttentionSpec::None => f.write_str("none"),
            AttentionSpec::Epca(cfg) => write!(f, "epca-{}{:?}", cfg.variant, cfg.sizes),
            AttentionSpec::Se { reduction } => write!(f, "se-r{reduction}"),
            AttentionSpec::ChannelDep { kind, sizes, .. } => write!(f, "pp+{kind}{sizes:?}"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Attention<T> {
    Epca(Epca<T>),
    Se(SqueezeExcitation<T>),
    ChannelDep(ChannelDependency<T>),
}

impl<T: Float> Attention<T> {
    pub fn build(
        spec: &AttentionSpec,
        name: &str,
        channels: usize,
        rng: &mut SeededRng,
    ) -> Result<Option<Self>> {
        Ok(match spec {
            AttentionSpec::None => None,
            AttentionSpec::Epca(cfg) => Some(Attention::Epca(Epca::new(name, channels, cfg.clone())?)),
            AttentionSpec::Se { reduction } => Some(Attention::Se(SqueezeExcitation::new(
                name, channels, *reduction, rng,
            ))),
            AttentionSpec::ChannelDep { kind, sizes, reduction } => Some(Attention::ChannelDep(
                ChannelDependency::new(name, *kind, sizes, channels, *reduction, rng),
            )),
        })
    }

    pub fn forward<'g>(
        &mut self,
        g: &'g Graph<T>,
        x: Var<'g, T>,
        mode: &mut Mode<'_>,
    ) -> Result<Var<'g, T>> {
        match self {
            Attention::Epca(m) => m.forward(g, x, mode),
            Attention::Se(m) => m.forward(g, x),
            Attention::ChannelDep(m) => m.forward(g, x, mode),
        }
    }

    /// Inference FLOPs for one sample at spatial size `h × w`.
    pub fn flops(&self, h: usize, w: usize) -> u64 {
        match self {
            Attention::Epca(m) => m.flops(h, w),
            Attention::Se(m) => m.flops(h, w),
            Attention::ChannelDep(m) => m.flops(h, w),
        }
    }

    pub fn as_epca(&self) -> Option<&Epca<T>> {
        match self {
            Attention::Epca(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_epca_mut(&mut self) -> Option<&mut Epca<T>> {
        match self {
            Attention::Epca(m) => Some(m),
            _ => None,
        }
    }

    fn inner(&self) -> &dyn Module<T> {
        match self {
            Attention::Epca(m) => m,
            Attention::Se(m) => m,
            Attention::ChannelDep(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Module<T> {
        match self {
            Attention::Epca(m) => m,
            Attention::Se(m) => m,
            Attention::ChannelDep(m) => m,
        }
    }
}

impl<T: Float> Module<T> for Attention<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        self.inner().visit_params(f)
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.inner_mut().visit_params_mut(f)
    }

    fn visit_buffers<'a>(&'a self, f: &mut dyn FnMut(&'a str, &'a Tensor<T>)) {
        self.inner().visit_buffers(f)
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.inner_mut().visit_buffers_mut(f)
    }

    fn visit_norms_mut(&mut self, f: &mut dyn FnMut(&mut BatchNorm<T>)) {
        self.inner_mut().visit_norms_mut(f)
    }
}
