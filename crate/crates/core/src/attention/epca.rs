use super::config::{EpcaConfig, FusionVariant};
use super::fusion::{mcf, scfm_dropout, scfm_hierarchical, scfm_linear, scfm_parallel, uniform_weights};
use super::pyramid::{pyramid_pool, PyramidContext};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Mode, Module, Param, ParamRole};
use crate::tensor::{Float, Tensor};

/// Learnable fusion parameters. All weights are shared across channels
/// unless the config asks for per-channel rows.
#[derive(Debug, Clone)]
pub enum FusionParams<T> {
    /// Linear and dropout variants: `w` of length F (or `[C, F]`).
    Linear { w: Param<T> },
    /// Per-grid encoders `u_k` (length k²) and a combiner `v` (length n).
    Hierarchical { encoders: Vec<Param<T>>, combiner: Param<T> },
    /// Per-grid encoders `u_k`; each branch owns a norm in [`Epca::norms`].
    Parallel { encoders: Vec<Param<T>> },
}

/// Efficient pyramid channel attention: pyramid pooling, fusion to one scalar
/// per channel, batch norm and sigmoid, then channel-wise rescaling.
#[derive(Debug, Clone)]
pub struct Epca<T> {
    pub name: String,
    pub cfg: EpcaConfig,
    pub channels: usize,
    pub fusion: FusionParams<T>,
    pub norms: Vec<BatchNorm<T>>,
    /// Skips the gate entirely, making the module the identity.
    pub bypass: bool,
}

impl<T: Float> Epca<T> {
    pub fn new(name: &str, channels: usize, cfg: EpcaConfig) -> Result<Self> {
        cfg.validate()?;
        let f = cfg.feature_count();
        let n = cfg.sizes.len();
        let role = ParamRole::Attention;
        let weight = |suffix: String, shape: &[usize], len: usize| {
            Param::new(format!("{name}.{suffix}"), uniform_weights(shape, len), role).without_decay()
        };
        let encoders = || {
            cfg.sizes
                .iter()
                .map(|&k| weight(format!("fusion.u{k}"), &[k * k], k * k))
                .collect::<Vec<_>>()
        };
        let norm = |suffix: &str| {
            let mut bn = BatchNorm::new(&format!("{name}.{suffix}"), channels, cfg.bn_affine, cfg.bn_eps, role);
            bn.momentum = cfg.bn_momentum;
            bn
        };
        let (fusion, norms) = match cfg.variant {
            FusionVariant::Linear | FusionVariant::Dropout => {
                let shape = if cfg.per_channel_weights { vec![channels, f] } else { vec![f] };
                (FusionParams::Linear { w: weight("fusion.w".into(), &shape, f) }, vec![norm("bn")])
            }
            FusionVariant::Hierarchical => (
                FusionParams::Hierarchical {
                    encoders: encoders(),
                    combiner: weight("fusion.v".into(), &[n], n),
                },
                vec![norm("bn")],
            ),
            FusionVariant::Parallel => (
                FusionParams::Parallel { encoders: encoders() },
                cfg.sizes.iter().map(|k| norm(&format!("bn{k}"))).collect(),
            ),
        };
        Ok(Epca {
            name: name.to_string(),
            cfg,
            channels,
            fusion,
            norms,
            bypass: false,
        })
    }

    /// Pyramid context and gate `[N, C, 1]` for `x`.
    pub fn gate<'g>(
        &mut self,
        g: &'g Graph<T>,
        x: Var<'g, T>,
        mode: &mut Mode<'_>,
    ) -> Result<(PyramidContext<'g, T>, Var<'g, T>)> {
        let shape = x.shape();
        if shape.len() != 4 || shape[1] != self.channels {
            return Err(Error::dim(format!(
                "{}: expected [N, {}, H, W], got {shape:?}",
                self.name, self.channels
            )));
        }
        let t = pyramid_pool(x, &self.cfg.sizes)?;
        let sizes = &self.cfg.sizes;
        let gate = match (&self.fusion, self.cfg.variant) {
            (FusionParams::Linear { w }, FusionVariant::Linear) => {
                let z = scfm_linear(&t, w.var(g))?;
                mcf(g, z, &mut self.norms[0], mode)?
            }
            (FusionParams::Linear { w }, FusionVariant::Dropout) => {
                let training = mode.training();
                let rate = self.cfg.dropout_rate;
                let z = match mode.rng() {
                    Some(rng) => scfm_dropout(&t, w.var(g), rate, training, rng)?,
                    None => scfm_linear(&t, w.var(g))?,
                };
                mcf(g, z, &mut self.norms[0], mode)?
            }
            (FusionParams::Hierarchical { encoders, combiner }, _) => {
                let us: Vec<_> = encoders.iter().map(|u| u.var(g)).collect();
                let z = scfm_hierarchical(&t, sizes, &us, combiner.var(g))?;
                mcf(g, z, &mut self.norms[0], mode)?
            }
            (FusionParams::Parallel { encoders }, _) => {
                let us: Vec<_> = encoders.iter().map(|u| u.var(g)).collect();
                scfm_parallel(g, &t, sizes, &us, &mut self.norms, mode, self.cfg.branch_combine)?
            }
            (FusionParams::Linear { .. }, v) => {
                return Err(Error::arg(format!("linear weights cannot drive the {v} variant")))
            }
        };
        Ok((t, gate))
    }

    pub fn forward<'g>(
        &mut self,
        g: &'g Graph<T>,
        x: Var<'g, T>,
        mode: &mut Mode<'_>,
    ) -> Result<Var<'g, T>> {
        if self.bypass {
            return Ok(x);
        }
        let (_, gate) = self.gate(g, x, mode)?;
        x.scale_channels(gate)
    }

    /// Weight each context feature receives before summation: `[F]`, or
    /// `[C, F]` for per-channel weights. Hierarchical fusion folds the
    /// combiner in (`v_k · u_k[j]`); parallel fusion reports the branch
    /// encoders.
    pub fn effective_weights(&self) -> Tensor<T> {
        match &self.fusion {
            FusionParams::Linear { w } => w.value.clone(),
            FusionParams::Hierarchical { encoders, combiner } => {
                let data = encoders
                    .iter()
                    .zip(combiner.value.data())
                    .flat_map(|(u, &v)| u.value.data().iter().map(move |&x| x * v))
                    .collect();
                Tensor::from_vec([self.cfg.feature_count()], data).expect("F weights")
            }
            FusionParams::Parallel { encoders } => {
                let data = encoders.iter().flat_map(|u| u.value.data().to_vec()).collect();
                Tensor::from_vec([self.cfg.feature_count()], data).expect("F weights")
            }
        }
    }

    /// Inference FLOPs for one `[C, H, W]` sample: pooling reads the map once
    /// per grid, fusion costs a multiply-add per weight, norm and sigmoid one
    /// each per channel, and the gate one multiply per element.
    pub fn flops(&self, h: usize, w: usize) -> u64 {
        let c = self.channels as u64;
        let plane = c * (h * w) as u64;
        let n = self.cfg.sizes.len() as u64;
        let f = self.cfg.feature_count() as u64;
        let pooling = n * plane;
        let fusion = 2 * c * f;
        let (extra, gating) = match self.cfg.variant {
            FusionVariant::Linear | FusionVariant::Dropout => (0, 2 * c),
            FusionVariant::Hierarchical => (2 * c * n, 2 * c),
            FusionVariant::Parallel => (n * c, 2 * c * n),
        };
        pooling + fusion + extra + gating + plane
    }
}

impl<T: Float> Module<T> for Epca<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        match &self.fusion {
            FusionParams::Linear { w } => f(w),
            FusionParams::Hierarchical { encoders, combiner } => {
                encoders.iter().for_each(&mut *f);
                f(combiner);
            }
            FusionParams::Parallel { encoders } => encoders.iter().for_each(&mut *f),
        }
        for norm in &self.norms {
            norm.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        match &mut self.fusion {
            FusionParams::Linear { w } => f(w),
            FusionParams::Hierarchical { encoders, combiner } => {
                encoders.iter_mut().for_each(&mut *f);
                f(combiner);
            }
            FusionParams::Parallel { encoders } => encoders.iter_mut().for_each(&mut *f),
        }
        for norm in &mut self.norms {
            norm.visit_params_mut(f);
        }
    }

    fn visit_buffers<'a>(&'a self, f: &mut dyn FnMut(&'a str, &'a Tensor<T>)) {
        for norm in &self.norms {
            norm.visit_buffers(f);
        }
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        for norm in &mut self.norms {
            norm.visit_buffers_mut(f);
        }
    }

    fn visit_norms_mut(&mut self, f: &mut dyn FnMut(&mut BatchNorm<T>)) {
        for norm in &mut self.norms {
            norm.visit_norms_mut(f);
        }
    }
}
