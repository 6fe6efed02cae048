use std::fmt;

use crate::attention::AttentionSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Two 3×3 convolutions.
    Basic,
    /// 1×1 reduce, 3×3, 1×1 expand (×4).
    Bottleneck,
}

impl BlockKind {
    pub fn expansion(self) -> usize {
        match self {
            BlockKind::Basic => 1,
            BlockKind::Bottleneck => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StemSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// 3×3 stride-2 max pool after the stem, as in ImageNet ResNets.
    pub max_pool: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSpec {
    /// Block width; bottleneck blocks output `channels × 4`.
    pub channels: usize,
    pub blocks: usize,
    /// Stride of the first block.
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub stem: StemSpec,
    pub stages: Vec<StageSpec>,
    pub block_kind: BlockKind,
    pub attention: AttentionSpec,
    pub num_classes: usize,
    /// `(C, H, W)` of one input image.
    pub input: (usize, usize, usize),
}

pub const PRESETS: [&str; 3] = ["mini-resnet20", "resnet18-shape", "resnet50-shape"];

impl ArchSpec {
    /// Builds a named preset. The `-shape` presets mirror the ImageNet
    /// backbones and are meant for parameter and FLOP audits.
    pub fn preset(
        name: &str,
        attention: AttentionSpec,
        num_classes: usize,
        input: (usize, usize, usize),
    ) -> Result<Self> {
        let stages = |spec: &[(usize, usize, usize)]| {
            spec.iter()
                .map(|&(channels, blocks, stride)| StageSpec { channels, blocks, stride })
                .collect::<Vec<_>>()
        };
        let imagenet_stem = StemSpec { channels: 64, kernel: 7, stride: 2, max_pool: true };
        let (stem, stages, block_kind) = match name {
            "mini-resnet20" => (
                StemSpec { channels: 16, kernel: 3, stride: 1, max_pool: false },
                stages(&[(16, 3, 1), (32, 3, 2), (64, 3, 2)]),
                BlockKind::Basic,
            ),
            "resnet18-shape" => (
                imagenet_stem,
                stages(&[(64, 2, 1), (128, 2, 2), (256, 2, 2), (512, 2, 2)]),
                BlockKind::Basic,
            ),
            "resnet50-shape" => (
                imagenet_stem,
                stages(&[(64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)]),
                BlockKind::Bottleneck,
            ),
            other => {
                return Err(Error::arg(format!(
                    "unknown architecture preset '{other}' (known: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        let spec = ArchSpec { stem, stages, block_kind, attention, num_classes, input };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::arg("architecture needs at least one stage"));
        }
        if self.num_classes < 2 {
            return Err(Error::arg("num_classes must be at least 2"));
        }
        let (c, h, w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::arg("input dimensions must be positive"));
        }
        let mut previous = 0;
        for (i, s) in self.stages.iter().enumerate() {
            if s.channels == 0 || s.blocks == 0 || s.stride == 0 {
                return Err(Error::arg(format!("stage {} has a zero field", i + 1)));
            }
            if s.channels < previous {
                return Err(Error::arg("stage channel counts must be non-decreasing"));
            }
            previous = s.channels;
        }
        if let AttentionSpec::Epca(cfg) = &self.attention {
            cfg.validate()?;
        }
        Ok(())
    }

    /// Channel count of the final feature map.
    pub fn feature_channels(&self) -> usize {
        self.stages.last().map_or(0, |s| s.channels * self.block_kind.expansion())
    }

    pub fn block_count(&self) -> usize {
        self.stages.iter().map(|s| s.blocks).sum()
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stages: Vec<String> = self
            .stages
            .iter()
            .map(|s| format!("{}x{}/{}", s.channels, s.blocks, s.stride))
            .collect();
        write!(
            f,
            "{:?} stages [{}], attention {}, {} classes, input {:?}",
            self.block_kind,
            stages.join(", "),
            self.attention,
            self.num_classes,
            self.input
        )
    }
}
