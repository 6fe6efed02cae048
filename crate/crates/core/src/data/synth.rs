//! Synthetic three-class images separating global texture from a local
//! lesion.
//!
//! Every image is a vignetted bright disk on a dark background with additive
//! Gaussian noise. Class 1 adds a fine periodic texture over the whole disk;
//! class 2 adds one small bright Gaussian patch at a random position.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{Dataset, Split};
use super::netpbm::quantize;
use crate::error::{Error, Result};
use crate::rng::seeded;

pub const CLASS_NAMES: [&str; 3] = ["plain", "texture", "patch"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub size: usize,
    pub noise: f32,
    /// Texture period in pixels and amplitude.
    pub texture_period: f32,
    pub texture_amplitude: f32,
    /// Patch peak; its standard deviation is `size / 16`.
    pub patch_amplitude: f32,
    /// Store images as their 8-bit quantization, so writing them as PGM and
    /// reading back is lossless.
    pub quantize: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            size: 32,
            noise: 0.03,
            texture_period: 4.0,
            texture_amplitude: 0.12,
            patch_amplitude: 0.35,
            quantize: true,
        }
    }
}

impl SynthConfig {
    pub fn patch_sigma(&self) -> f32 {
        self.size as f32 / 16.0
    }

    /// Expected mean-intensity gain from the patch over the whole image,
    /// `a · 2πσ² / s²` (the patch lies well inside the image).
    pub fn patch_mass(&self) -> f64 {
        let s = self.size as f64;
        let sigma = self.patch_sigma() as f64;
        self.patch_amplitude as f64 * 2.0 * std::f64::consts::PI * sigma * sigma / (s * s)
    }
}

/// One image of class `label` (0, 1 or 2).
pub fn render<R: Rng + ?Sized>(cfg: &SynthConfig, label: usize, rng: &mut R) -> Vec<f32> {
    let s = cfg.size as f32;
    let cx = s / 2.0 + rng.random_range(-s / 16.0..s / 16.0);
    let cy = s / 2.0 + rng.random_range(-s / 16.0..s / 16.0);
    let radius = s * rng.random_range(0.38..0.44);
    let level = rng.random_range(0.45..0.55);
    let phase = (rng.random_range(0.0..std::f32::consts::TAU), rng.random_range(0.0..std::f32::consts::TAU));
    let patch = {
        let angle = rng.random_range(0.0..std::f32::consts::TAU);
        let dist = radius * 0.5 * rng.random::<f32>().sqrt();
        (cx + dist * angle.cos(), cy + dist * angle.sin())
    };
    let noise = Normal::new(0.0, cfg.noise).expect("finite noise");
    let sigma = cfg.patch_sigma();
    let k = std::f32::consts::TAU / cfg.texture_period;
    let mut out = Vec::with_capacity(cfg.size * cfg.size);
    for y in 0..cfg.size {
        for x in 0..cfg.size {
            let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
            let d = ((px - cx).powi(2) + (py - cy).powi(2)).sqrt();
            let inside = ((radius - d) / 1.5).clamp(0.0, 1.0);
            let vignette = 1.0 - 0.3 * (d / radius).min(1.0).powi(2);
            let mut v = 0.1 + inside * (level * vignette - 0.1);
            match label {
                1 => v += inside * cfg.texture_amplitude * (k * px + phase.0).sin() * (k * py + phase.1).sin(),
                2 => {
                    let r2 = (px - patch.0).powi(2) + (py - patch.1).powi(2);
                    v += cfg.patch_amplitude * (-r2 / (2.0 * sigma * sigma)).exp();
                }
                _ => {}
            }
            v = (v + noise.sample(rng)).clamp(0.0, 1.0);
            out.push(if cfg.quantize { quantize(v) as f32 / 255.0 } else { v });
        }
    }
    out
}

/// `n_per_class` images of each class, interleaved by class, one channel.
pub fn generate(n_per_class: usize, cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    if cfg.size < 32 {
        return Err(Error::arg(format!("synthetic image size must be at least 32, got {}", cfg.size)));
    }
    let names = CLASS_NAMES.iter().map(|s| s.to_string()).collect();
    let mut ds = Dataset::new((1, cfg.size, cfg.size), names, Split::Train);
    let mut rng = seeded(seed);
    for i in 0..n_per_class {
        for label in 0..CLASS_NAMES.len() {
            let image = render(cfg, label, &mut rng);
            ds.push(&image, label, format!("{:06}.pgm", i * CLASS_NAMES.len() + label))?;
        }
    }
    Ok(ds)
}
