use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How pooled context features are fused into one scalar per channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FusionVariant {
    /// `z = Σ_f w_f · t_f`.
    Linear,
    /// Dropout over the feature axis, then the linear fusion.
    Dropout,
    /// Each grid size encoded on its own, then combined by learned weights.
    Hierarchical,
    /// One gated branch per grid size; branch gates are averaged.
    Parallel,
}

impl FusionVariant {
    pub const ALL: [FusionVariant; 4] = [
        FusionVariant::Linear,
        FusionVariant::Dropout,
        FusionVariant::Hierarchical,
        FusionVariant::Parallel,
    ];
}

impl fmt::Display for FusionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionVariant::Linear => "linear",
            FusionVariant::Dropout => "dropout",
            FusionVariant::Hierarchical => "hierarchical",
            FusionVariant::Parallel => "parallel",
        })
    }
}

impl FromStr for FusionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(FusionVariant::Linear),
            "dropout" | "drop" => Ok(FusionVariant::Dropout),
            "hierarchical" | "hier" => Ok(FusionVariant::Hierarchical),
            "parallel" | "parr" => Ok(FusionVariant::Parallel),
            other => Err(Error::arg(format!("unknown fusion variant '{other}'"))),
        }
    }
}

/// Combination of the per-branch gates of the parallel variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BranchCombine {
    #[default]
    Mean,
    Product,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpcaConfig {
    /// Pooling grid sizes, strictly increasing.
    pub sizes: Vec<usize>,
    pub variant: FusionVariant,
    pub dropout_rate: f64,
    pub bn_affine: bool,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    /// One weight row per channel (`[C, F]`) instead of a shared `[F]` vector.
    /// Linear and dropout variants only.
    pub per_channel_weights: bool,
    pub branch_combine: BranchCombine,
}

impl Default for EpcaConfig {
    fn default() -> Self {
        EpcaConfig {
            sizes: vec![1, 3],
            variant: FusionVariant::Linear,
            dropout_rate: 0.5,
            bn_affine: false,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            per_channel_weights: false,
            branch_combine: BranchCombine::Mean,
        }
    }
}

impl EpcaConfig {
    pub fn with_sizes(sizes: &[usize]) -> Result<Self> {
        let cfg = EpcaConfig {
            sizes: sizes.to_vec(),
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_variant(mut self, variant: FusionVariant) -> Self {
        self.variant = variant;
        self
    }

    /// Number of pooled context features per channel, `Σ k²`.
    pub fn feature_count(&self) -> usize {
        self.sizes.iter().map(|k| k * k).sum()
    }

    /// Offset of grid `k`'s features within the context vector.
    pub fn offsets(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .scan(0, |acc, k| {
                let start = *acc;
                *acc += k * k;
                Some(start)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::arg("pyramid needs at least one grid size"));
        }
        if self.sizes[0] == 0 || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::arg(format!(
                "grid sizes must be >= 1 and strictly increasing, got {:?}",
                self.sizes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::arg(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if !(self.bn_eps > 0.0) {
            return Err(Error::arg("bn_eps must be > 0"));
        }
        if self.per_channel_weights
            && !matches!(self.variant, FusionVariant::Linear | FusionVariant::Dropout)
        {
            return Err(Error::arg(
                "per-channel fusion weights apply to the linear and dropout variants only",
            ));
        }
        Ok(())
    }
}

/// Parses `"1,3"` into `[1, 3]`.
pub fn parse_sizes(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::arg(format!("bad grid size '{s}' in '{text}'")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_pyramid_has_ten_features() {
        let cfg = EpcaConfig::default();
        assert_eq!(cfg.sizes, vec![1, 3]);
        assert_eq!(cfg.feature_count(), 10);
        assert_eq!(cfg.offsets(), vec![0, 1]);
        assert_eq!(EpcaConfig::with_sizes(&parse_sizes("1,3").unwrap()).unwrap().feature_count(), 10);
    }

    #[test]
    fn sizes_must_increase() {
        assert!(EpcaConfig::with_sizes(&[3, 1]).is_err());
        assert!(EpcaConfig::with_sizes(&[1, 1]).is_err());
        assert!(EpcaConfig::with_sizes(&[0, 2]).is_err());
        assert!(EpcaConfig::with_sizes(&[]).is_err());
        assert_eq!(EpcaConfig::with_sizes(&[1, 2, 4]).unwrap().feature_count(), 21);
    }
}
