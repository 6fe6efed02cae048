use std::fmt;

use crate::nn::Module;
use crate::ops::conv_output_size;
use crate::tensor::Float;

use super::block::{Block, ConvBn};
use super::model::Network;

/// FLOPs of a bias-free convolution: one multiply and one add per weight
/// tap per output position.
pub fn conv_flops(cin: usize, cout: usize, kernel: usize, oh: usize, ow: usize) -> u64 {
    2 * (cout * cin * kernel * kernel * oh * ow) as u64
}

pub fn linear_flops(din: usize, dout: usize) -> u64 {
    2 * (din * dout) as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRow {
    pub name: String,
    pub kind: &'static str,
    /// `(C, H, W)` after the layer.
    pub output: (usize, usize, usize),
    pub params: usize,
    pub flops: u64,
}

/// Parameter and FLOP accounting at the configured input size. FLOPs count
/// one multiply–accumulate as two; normalization, activation, pooling and
/// residual additions cost one per output element. Attention is tallied
/// apart from the backbone.
#[derive(Debug, Clone)]
pub struct ModelSummary {
    pub rows: Vec<LayerRow>,
    pub param_count: usize,
    pub attention_params: usize,
    pub flops: u64,
    pub attention_flops: u64,
}

impl ModelSummary {
    pub fn backbone_params(&self) -> usize {
        self.param_count - self.attention_params
    }

    pub fn total_flops(&self) -> u64 {
        self.flops + self.attention_flops
    }

    /// Attention FLOPs relative to the rest of the network.
    pub fn attention_flop_ratio(&self) -> f64 {
        self.attention_flops as f64 / self.flops as f64
    }

    pub fn attention_param_ratio(&self) -> f64 {
        self.attention_params as f64 / self.backbone_params() as f64
    }
}

fn conv_bn_row<T: Float>(
    name: &str,
    layer: &ConvBn<T>,
    input: (usize, usize, usize),
    relu: bool,
) -> LayerRow {
    let (_, h, w) = input;
    let conv = &layer.conv;
    let k = conv.kernel();
    let oh = conv_output_size(h, k, conv.stride, conv.padding);
    let ow = conv_output_size(w, k, conv.stride, conv.padding);
    let cout = conv.out_channels();
    let elements = (cout * oh * ow) as u64;
    LayerRow {
        name: name.to_string(),
        kind: if relu { "conv-bn-relu" } else { "conv-bn" },
        output: (cout, oh, ow),
        params: layer.param_count(),
        flops: conv_flops(conv.in_channels(), cout, k, oh, ow) + elements * (1 + relu as u64),
    }
}

fn block_rows<T: Float>(block: &Block<T>, input: (usize, usize, usize), rows: &mut Vec<LayerRow>) -> (usize, usize, usize) {
    let last = block.layers.len() - 1;
    let mut shape = input;
    for (i, layer) in block.layers.iter().enumerate() {
        let row = conv_bn_row(&format!("{}.{i}", block.name), layer, shape, i < last);
        shape = row.output;
        rows.push(row);
    }
    if let Some(att) = &block.attention {
        rows.push(LayerRow {
            name: format!("{}.attn", block.name),
            kind: "attention",
            output: shape,
            params: att.param_count(),
            flops: att.flops(shape.1, shape.2),
        });
    }
    if let Some(ds) = &block.downsample {
        rows.push(conv_bn_row(&format!("{}.downsample", block.name), ds, input, false));
    }
    rows.push(LayerRow {
        name: format!("{}.add", block.name),
        kind: "add-relu",
        output: shape,
        params: 0,
        flops: 2 * (shape.0 * shape.1 * shape.2) as u64,
    });
    shape
}

impl<T: Float> Network<T> {
    pub fn summary(&self) -> ModelSummary {
        let mut rows = Vec::new();
        let stem = conv_bn_row("stem", &self.stem, self.spec.input, true);
        let mut shape = stem.output;
        rows.push(stem);
        if self.spec.stem.max_pool {
            let (c, h, w) = shape;
            shape = (c, conv_output_size(h, 3, 2, 1), conv_output_size(w, 3, 2, 1));
            rows.push(LayerRow {
                name: "stem.pool".into(),
                kind: "max-pool",
                output: shape,
                params: 0,
                flops: (shape.0 * shape.1 * shape.2) as u64,
            });
        }
        for block in &self.blocks {
            shape = block_rows(block, shape, &mut rows);
        }
        rows.push(LayerRow {
            name: "pool".into(),
            kind: "global-avg-pool",
            output: (shape.0, 1, 1),
            params: 0,
            flops: shape.0 as u64,
        });
        rows.push(LayerRow {
            name: "head".into(),
            kind: "linear",
            output: (self.spec.num_classes, 1, 1),
            params: self.head.param_count(),
            flops: linear_flops(self.head.in_features(), self.head.out_features()),
        });
        let (attention, backbone): (Vec<&LayerRow>, Vec<&LayerRow>) =
            rows.iter().partition(|r| r.kind == "attention");
        ModelSummary {
            param_count: self.param_count(),
            attention_params: attention.iter().map(|r| r.params).sum(),
            flops: backbone.iter().map(|r| r.flops).sum(),
            attention_flops: attention.iter().map(|r| r.flops).sum(),
            rows,
        }
    }
}

impl fmt::Display for ModelSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<28} {:<16} {:>16} {:>12} {:>14}", "layer", "kind", "output", "params", "flops")?;
        for r in &self.rows {
            let shape = format!("{}x{}x{}", r.output.0, r.output.1, r.output.2);
            writeln!(f, "{:<28} {:<16} {:>16} {:>12} {:>14}", r.name, r.kind, shape, r.params, r.flops)?;
        }
        writeln!(f)?;
        writeln!(f, "params total      {}", self.param_count)?;
        writeln!(f, "params backbone   {}", self.backbone_params())?;
        writeln!(
            f,
            "params attention  {} ({:.4}% of backbone)",
            self.attention_params,
            100.0 * self.attention_param_ratio()
        )?;
        writeln!(f, "flops backbone    {} (1 MAC = 2 FLOPs)", self.flops)?;
        write!(
            f,
            "flops attention   {} ({:.4}% of backbone)",
            self.attention_flops,
            100.0 * self.attention_flop_ratio()
        )
    }
}
