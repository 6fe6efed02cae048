use std::cell::Cell;

use crate::autograd::{Graph, Var};
use crate::data::netpbm::{self, Image};
use crate::data::resize::bilinear;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::nn::Mode;
use crate::tensor::{Float, Tensor};

/// A model whose intermediate layers can be inspected.
pub trait Introspect<T> {
    fn layer_names(&self) -> Vec<String>;

    /// Eval-mode class scores `[N, K]` for `x`. The output of `layer` is
    /// passed through `tap`, and the returned variable continues the pass.
    fn forward_tapped<'g>(
        &mut self,
        g: &'g Graph<T>,
        x: Var<'g, T>,
        layer: &str,
        tap: &mut dyn FnMut(Var<'g, T>) -> Var<'g, T>,
    ) -> Result<Var<'g, T>>;
}

impl<T: Float> Introspect<T> for Network<T> {
    fn layer_names(&self) -> Vec<String> {
        Network::layer_names(self)
    }

    fn forward_tapped<'g>(
        &mut self,
        g: &'g Graph<T>,
        x: Var<'g, T>,
        layer: &str,
        tap: &mut dyn FnMut(Var<'g, T>) -> Var<'g, T>,
    ) -> Result<Var<'g, T>> {
        Ok(self.trace_tapped(g, x, &mut Mode::Eval, Some((layer, tap)))?.logits)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    /// Row-major, in `[0, 1]`.
    pub values: Vec<f64>,
    pub layer: String,
    pub class: usize,
}

/// Scales a non-negative map so its maximum is 1. An all-zero map stays
/// zero.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(0.0f64, f64::max);
    if max > 0.0 {
        values.iter().map(|v| (v / max).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Gradient-weighted class activation map of `class` at `layer` for one
/// image `[C, H, W]`, upsampled to the image size.
///
/// Channel weights are the spatial means of the score gradient; the map is
/// `relu(Σ_k α_k A_k)`, divided by its maximum.
pub fn grad_cam<T: Float, M: Introspect<T> + ?Sized>(
    model: &mut M,
    image: &Tensor<T>,
    class: usize,
    layer: &str,
) -> Result<Heatmap> {
    if !model.layer_names().iter().any(|l| l == layer) {
        return Err(Error::arg(format!(
            "unknown layer '{layer}' (available: {})",
            model.layer_names().join(", ")
        )));
    }
    let shape = image.shape();
    if shape.len() != 3 {
        return Err(Error::dim(format!("grad_cam expects one [C, H, W] image, got {shape:?}")));
    }
    let (ih, iw) = (shape[1], shape[2]);
    let g = Graph::new();
    let x = g.constant(image.clone().reshape([1, shape[0], ih, iw])?);
    let tapped = Cell::new(None);
    let scores = model.forward_tapped(&g, x, layer, &mut |a| {
        let leaf = g.leaf((*a.value()).clone(), true);
        tapped.set(Some(leaf));
        leaf
    })?;
    let activation = tapped.get().ok_or_else(|| Error::arg(format!("layer '{layer}' was not reached")))?;
    let k = scores.shape()[1];
    if class >= k {
        return Err(Error::arg(format!("class {class} out of range for {k} classes")));
    }
    g.backward(scores.narrow_last(class, 1)?.sum())?;

    let a = activation.value();
    let ashape = a.shape().to_vec();
    if ashape.len() != 4 {
        return Err(Error::dim(format!("layer '{layer}' output is not [N, C, H, W]")));
    }
    let (c, h, w) = (ashape[1], ashape[2], ashape[3]);
    let grad = activation.grad().unwrap_or_else(|| Tensor::zeros(ashape.clone()));
    let mut map = vec![0.0f64; h * w];
    for ch in 0..c {
        let plane = ch * h * w..(ch + 1) * h * w;
        let alpha = grad.data()[plane.clone()].iter().map(|v| v.as_f64()).sum::<f64>() / (h * w) as f64;
        for (m, v) in map.iter_mut().zip(&a.data()[plane]) {
            *m += alpha * v.as_f64();
        }
    }
    let map: Vec<f32> = map.iter().map(|v| v.max(0.0) as f32).collect();
    let up: Vec<f64> = bilinear(&map, h, w, ih, iw).into_iter().map(f64::from).collect();
    Ok(Heatmap { height: ih, width: iw, values: normalize(&up), layer: layer.to_string(), class })
}

impl Heatmap {
    pub fn to_image(&self) -> Image {
        Image {
            channels: 1,
            height: self.height,
            width: self.width,
            data: self.values.iter().map(|&v| v as f32).collect(),
        }
    }

    /// 8-bit binary PGM, values scaled by 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        netpbm::encode(&self.to_image()).expect("one-channel image")
    }

    /// One row per image row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.width) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}
