use crate::attention::{Attention, Epca};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Linear, Mode, Module, Param, ParamRole};
use crate::ops::softmax;
use crate::rng::SeededRng;
use crate::tensor::{Float, Tensor};

use super::arch::ArchSpec;
use super::block::{Block, ConvBn};

/// Stem, residual stages and a global-average-pool + linear head.
///
/// Layer names are `stem`, `stage{s}.block{b}` (stages from 1, blocks from
/// 0) and `head`; attention modules live under `stage{s}.block{b}.attn`.
#[derive(Debug, Clone)]
pub struct Network<T> {
    pub spec: ArchSpec,
    pub stem: ConvBn<T>,
    pub blocks: Vec<Block<T>>,
    pub head: Linear<T>,
}

/// Outputs of a traced forward pass.
pub struct Trace<'g, T> {
    pub logits: Var<'g, T>,
    /// Output of the stem and of every block, in order.
    pub activations: Vec<(String, Var<'g, T>)>,
    /// Input of every attention module, keyed by block name.
    pub attention_inputs: Vec<(String, Var<'g, T>)>,
}

impl<'g, T: Float> Trace<'g, T> {
    pub fn activation(&self, name: &str) -> Option<Var<'g, T>> {
        self.activations.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

impl<T: Float> Network<T> {
    pub fn build(spec: &ArchSpec, rng: &mut SeededRng) -> Result<Self> {
        spec.validate()?;
        let s = &spec.stem;
        let stem = ConvBn::new("stem", spec.input.0, s.channels, s.kernel, s.stride, rng);
        let mut blocks = Vec::with_capacity(spec.block_count());
        let mut cin = s.channels;
        for (si, stage) in spec.stages.iter().enumerate() {
            for b in 0..stage.blocks {
                let stride = if b == 0 { stage.stride } else { 1 };
                let name = format!("stage{}.block{b}", si + 1);
                let block = Block::new(&name, spec.block_kind, cin, stage.channels, stride, &spec.attention, rng)?;
                cin = block.out_channels();
                blocks.push(block);
            }
        }
        let head = Linear::new("head", cin, spec.num_classes, true, ParamRole::Head, rng);
        Ok(Network { spec: spec.clone(), stem, blocks, head })
    }

    pub fn forward<'g>(
        &mut self,
        g: &'g Graph<T>,
        x: Var<'g, T>,
        mode: &mut Mode<'_>,
    ) -> Result<Var<'g, T>> {
        Ok(self.trace(g, x, mode)?.logits)
    }

    pub fn trace<'g>(
        &mut self,
        g: &'g Graph<T>,
        x: Var<'g, T>,
        mode: &mut Mode<'_>,
    ) -> Result<Trace<'g, T>> {
        self.trace_tapped(g, x, mode, None)
    }

    /// Like [`Network::trace`], but the output of layer `tap.0` is passed
    /// through `tap.1` and the returned value continues the forward pass.
    pub fn trace_tapped<'g>(
        &mut self,
        g: &'g Graph<T>,
        x: Var<'g, T>,
        mode: &mut Mode<'_>,
        mut tap: Option<(&str, &mut dyn FnMut(Var<'g, T>) -> Var<'g, T>)>,
    ) -> Result<Trace<'g, T>> {
        let mut at = |name: &str, v: Var<'g, T>| match &mut tap {
            Some((layer, f)) if *layer == name => f(v),
            _ => v,
        };
        let shape = x.shape();
        let (c, _, _) = self.spec.input;
        if shape.len() != 4 || shape[1] != c {
            return Err(Error::dim(format!("network expects [N, {c}, H, W], got {shape:?}")));
        }
        let mut activations = Vec::with_capacity(self.blocks.len() + 1);
        let mut attention_inputs = Vec::new();
        let mut y = self.stem.forward(g, x, mode)?.relu();
        if self.spec.stem.max_pool {
            y = y.max_pool2d(3, 2, 1)?;
        }
        y = at("stem", y);
        activations.push(("stem".to_string(), y));
        for block in &mut self.blocks {
            let out = block.forward(g, y, mode)?;
            y = at(&block.name, out.output);
            activations.push((block.name.clone(), y));
            if let Some(t) = out.attention_input {
                attention_inputs.push((block.name.clone(), t));
            }
        }
        let logits = self.head.forward(g, y.global_avg_pool()?)?;
        Ok(Trace { logits, activations, attention_inputs })
    }

    /// Class probabilities in eval mode, `[N, K]`, computed `batch` images at
    /// a time.
    pub fn predict(&mut self, images: &Tensor<T>, batch: usize) -> Result<Tensor<T>> {
        let shape = images.shape().to_vec();
        if shape.len() != 4 {
            return Err(Error::dim(format!("predict expects [N, C, H, W], got {shape:?}")));
        }
        let per = shape[1] * shape[2] * shape[3];
        let k = self.spec.num_classes;
        let mut out = Vec::with_capacity(shape[0] * k);
        for chunk in images.data().chunks(per * batch.max(1)) {
            let n = chunk.len() / per;
            let x = Tensor::from_vec([n, shape[1], shape[2], shape[3]], chunk.to_vec())?;
            let g = Graph::new();
            let logits = self.forward(&g, g.constant(x), &mut Mode::Eval)?;
            out.extend_from_slice(softmax(&logits.value()).data());
        }
        Tensor::from_vec([shape[0], k], out)
    }

    pub fn layer_names(&self) -> Vec<String> {
        std::iter::once("stem".to_string())
            .chain(self.blocks.iter().map(|b| b.name.clone()))
            .collect()
    }

    pub fn block(&self, name: &str) -> Option<&Block<T>> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Every EPCA module with its block name.
    pub fn epca_modules(&self) -> Vec<(&str, &Epca<T>)> {
        self.blocks
            .iter()
            .filter_map(|b| b.attention.as_ref()?.as_epca().map(|m| (b.name.as_str(), m)))
            .collect()
    }

    pub fn epca_modules_mut(&mut self) -> Vec<(String, &mut Epca<T>)> {
        self.blocks
            .iter_mut()
            .filter_map(|b| {
                let name = b.name.clone();
                b.attention.as_mut()?.as_epca_mut().map(|m| (name, m))
            })
            .collect()
    }

    /// Forces every EPCA gate to one, turning the network into its plain
    /// backbone.
    pub fn set_attention_bypass(&mut self, bypass: bool) {
        for (_, m) in self.epca_modules_mut() {
            m.bypass = bypass;
        }
    }

    /// Low/middle/high blocks used for fusion-weight statistics: the first
    /// block of the first stage, the middle block of the middle stage and
    /// the last block of the last stage. Four-stage backbones use the
    /// second, third-stage-last and fourth-stage-last blocks, matching the
    /// usual ResNet-50 choice of conv2_2, conv4_6 and conv5_3.
    pub fn stat_blocks(&self) -> Vec<(&'static str, String)> {
        let stages = &self.spec.stages;
        let pick = |s: usize, b: usize| format!("stage{}.block{b}", s + 1);
        let picks = if stages.len() == 4 {
            [pick(0, 1.min(stages[0].blocks - 1)), pick(2, stages[2].blocks - 1), pick(3, stages[3].blocks - 1)]
        } else {
            let last = stages.len() - 1;
            let mid = stages.len() / 2;
            [pick(0, 0), pick(mid, stages[mid].blocks / 2), pick(last, stages[last].blocks - 1)]
        };
        ["low", "mid", "high"].into_iter().zip(picks).collect()
    }

    /// Whether a checkpoint tensor belongs to the backbone (neither an
    /// attention module nor the classifier head).
    pub fn is_backbone_tensor(name: &str) -> bool {
        !name.contains(".attn.") && !name.starts_with("head.")
    }

    /// Parameters of every attention module.
    pub fn attention_param_count(&self) -> usize {
        self.param_count_by_role(ParamRole::Attention)
    }

    pub fn attention(&self) -> impl Iterator<Item = (&str, &Attention<T>)> {
        self.blocks
            .iter()
            .filter_map(|b| b.attention.as_ref().map(|a| (b.name.as_str(), a)))
    }
}

impl<T: Float> Module<T> for Network<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        self.stem.visit_params(f);
        self.blocks.iter().for_each(|b| b.visit_params(f));
        self.head.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.stem.visit_params_mut(f);
        self.blocks.iter_mut().for_each(|b| b.visit_params_mut(f));
        self.head.visit_params_mut(f);
    }

    fn visit_buffers<'a>(&'a self, f: &mut dyn FnMut(&'a str, &'a Tensor<T>)) {
        self.stem.visit_buffers(f);
        self.blocks.iter().for_each(|b| b.visit_buffers(f));
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.stem.visit_buffers_mut(f);
        self.blocks.iter_mut().for_each(|b| b.visit_buffers_mut(f));
    }

    fn visit_norms_mut(&mut self, f: &mut dyn FnMut(&mut BatchNorm<T>)) {
        self.stem.visit_norms_mut(f);
        self.blocks.iter_mut().for_each(|b| b.visit_norms_mut(f));
    }
}
