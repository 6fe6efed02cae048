//! Alternatives to linear fusion for modelling channel dependencies on top
//! of the pyramid context. All three mix information across channels.

use std::fmt;
use std::str::FromStr;

use super::fusion::mcf;
use super::pyramid::{pyramid_pool, PyramidContext};
use super::se::reduced_width;
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Linear, Mode, Module, Param, ParamRole};
use crate::ops::channel_conv1d;
use crate::rng::SeededRng;
use crate::tensor::{Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelDepKind {
    /// All `C·F` context features through a two-layer reduction MLP.
    Mlp,
    /// One `C → C/r → C` MLP applied to every pooled position, summed.
    SharedMlp,
    /// Kernel-3 convolution across channels of the global-average feature.
    Cic,
}

impl ChannelDepKind {
    pub const ALL: [ChannelDepKind; 3] =
        [ChannelDepKind::Mlp, ChannelDepKind::SharedMlp, ChannelDepKind::Cic];
}

impl fmt::Display for ChannelDepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelDepKind::Mlp => "mlp",
            ChannelDepKind::SharedMlp => "shared-mlp",
            ChannelDepKind::Cic => "cic",
        })
    }
}

impl FromStr for ChannelDepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mlp" => Ok(ChannelDepKind::Mlp),
            "shared-mlp" | "shared_mlp" | "sharedmlp" => Ok(ChannelDepKind::SharedMlp),
            "cic" => Ok(ChannelDepKind::Cic),
            other => Err(Error::arg(format!("unknown channel-dependency head '{other}'"))),
        }
    }
}

pub const CIC_KERNEL: usize = 3;

#[derive(Debug, Clone)]
enum Head<T> {
    Mlp { fc1: Linear<T>, fc2: Linear<T> },
    Cic { kernel: Param<T> },
}

/// Pyramid context → channel-mixing head → batch norm + sigmoid → rescale.
#[derive(Debug, Clone)]
pub struct ChannelDependency<T> {
    pub kind: ChannelDepKind,
    pub sizes: Vec<usize>,
    pub channels: usize,
    head: Head<T>,
    pub norm: BatchNorm<T>,
}

impl<T: Float> ChannelDependency<T> {
    pub fn new(
        name: &str,
        kind: ChannelDepKind,
        sizes: &[usize],
        channels: usize,
        reduction: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let role = ParamRole::Attention;
        let f: usize = sizes.iter().map(|k| k * k).sum();
        let hidden = reduced_width(channels, reduction);
        let head = match kind {
            ChannelDepKind::Mlp => Head::Mlp {
                fc1: Linear::new(&format!("{name}.fc1"), channels * f, hidden, true, role, rng),
                fc2: Linear::new(&format!("{name}.fc2"), hidden, channels, true, role, rng),
            },
            ChannelDepKind::SharedMlp => Head::Mlp {
                fc1: Linear::new(&format!("{name}.fc1"), channels, hidden, true, role, rng),
                fc2: Linear::new(&format!("{name}.fc2"), hidden, channels, true, role, rng),
            },
            ChannelDepKind::Cic => {
                let bound = 1.0 / (CIC_KERNEL as f64).sqrt();
                Head::Cic {
                    kernel: Param::new(
                        format!("{name}.kernel"),
                        Tensor::uniform([CIC_KERNEL], -bound, bound, rng),
                        role,
                    ),
                }
            }
        };
        ChannelDependency {
            kind,
            sizes: sizes.to_vec(),
            channels,
            head,
            norm: BatchNorm::new(&format!("{name}.bn"), channels, false, 1e-5, role),
        }
    }

    /// The pre-normalization encoding `z: [N, C, 1]`.
    pub fn encode<'g>(
        &self,
        g: &'g Graph<T>,
        x: Var<'g, T>,
        t: &PyramidContext<'g, T>,
    ) -> Result<Var<'g, T>> {
        let shape = t.values.shape();
        let (n, c, f) = (shape[0], shape[1], shape[2]);
        match (&self.head, self.kind) {
            (Head::Mlp { fc1, fc2 }, ChannelDepKind::Mlp) => {
                let flat = t.values.reshape([n, c * f])?;
                let hidden = fc1.forward(g, flat)?.relu();
                fc2.forward(g, hidden)?.reshape([n, c, 1])
            }
            (Head::Mlp { fc1, fc2 }, _) => {
                let rows = t.values.transpose_last2()?.reshape([n * f, c])?;
                let hidden = fc1.forward(g, rows)?.relu();
                fc2.forward(g, hidden)?
                    .reshape([n, f, c])?
                    .sum_axis(1)?
                    .reshape([n, c, 1])
            }
            (Head::Cic { kernel }, _) => {
                let squeezed = x.adaptive_avg_pool(1)?.reshape([n, c, 1])?;
                channel_conv1d(squeezed, kernel.var(g))
            }
        }
    }

    pub fn gate<'g>(
        &mut self,
        g: &'g Graph<T>,
        x: Var<'g, T>,
        mode: &Mode<'_>,
    ) -> Result<Var<'g, T>> {
        let shape = x.shape();
        if shape.len() != 4 || shape[1] != self.channels {
            return Err(Error::dim(format!(
                "{} head over {} channels got {shape:?}",
                self.kind, self.channels
            )));
        }
        let t = pyramid_pool(x, &self.sizes)?;
        let z = self.encode(g, x, &t)?;
        mcf(g, z, &mut self.norm, mode)
    }

    pub fn forward<'g>(
        &mut self,
        g: &'g Graph<T>,
        x: Var<'g, T>,
        mode: &Mode<'_>,
    ) -> Result<Var<'g, T>> {
        let gate = self.gate(g, x, mode)?;
        x.scale_channels(gate)
    }

    pub fn flops(&self, h: usize, w: usize) -> u64 {
        let c = self.channels as u64;
        let plane = c * (h * w) as u64;
        let f: u64 = self.sizes.iter().map(|k| (k * k) as u64).sum();
        let n = self.sizes.len() as u64;
        let head = match &self.head {
            Head::Mlp { fc1, .. } => {
                let hidden = fc1.out_features() as u64;
                match self.kind {
                    ChannelDepKind::Mlp => n * plane + 2 * c * f * hidden + hidden + 2 * hidden * c,
                    _ => n * plane + f * (2 * c * hidden + hidden + 2 * hidden * c) + f * c,
                }
            }
            Head::Cic { .. } => plane + 2 * CIC_KERNEL as u64 * c,
        };
        head + 2 * c + plane
    }
}

impl<T: Float> Module<T> for ChannelDependency<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        match &self.head {
            Head::Mlp { fc1, fc2 } => {
                fc1.visit_params(f);
                fc2.visit_params(f);
            }
            Head::Cic { kernel } => f(kernel),
        }
        self.norm.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        match &mut self.head {
            Head::Mlp { fc1, fc2 } => {
                fc1.visit_params_mut(f);
                fc2.visit_params_mut(f);
            }
            Head::Cic { kernel } => f(kernel),
        }
        self.norm.visit_params_mut(f);
    }

    fn visit_buffers<'a>(&'a self, f: &mut dyn FnMut(&'a str, &'a Tensor<T>)) {
        self.norm.visit_buffers(f);
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.norm.visit_buffers_mut(f);
    }

    fn visit_norms_mut(&mut self, f: &mut dyn FnMut(&mut BatchNorm<T>)) {
        self.norm.visit_norms_mut(f);
    }
}
