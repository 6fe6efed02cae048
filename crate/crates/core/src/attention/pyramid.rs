use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::tensor::Float;

/// Multi-scale context of a feature map: for every channel, the flattened
/// adaptive-average-pooled grids concatenated in ascending grid size,
/// row-major within a grid. Shape `[N, C, F]`.
#[derive(Debug, Clone, Copy)]
pub struct PyramidContext<'g, T> {
    pub values: Var<'g, T>,
}

impl<'g, T: Float> PyramidContext<'g, T> {
    /// The `[N, C, k²]` slice belonging to `sizes[index]`.
    pub fn scale(&self, sizes: &[usize], index: usize) -> Result<Var<'g, T>> {
        let start: usize = sizes[..index].iter().map(|k| k * k).sum();
        self.values.narrow_last(start, sizes[index] * sizes[index])
    }

    pub fn feature_count(&self) -> usize {
        self.values.shape()[2]
    }
}

/// Pools `x: [N, C, H, W]` at every grid size and concatenates the results.
pub fn pyramid_pool<'g, T: Float>(x: Var<'g, T>, sizes: &[usize]) -> Result<PyramidContext<'g, T>> {
    let shape = x.shape();
    crate::ops::expect_rank(&shape, 4, "pyramid_pool")?;
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    if let Some(&k) = sizes.iter().find(|&&k| k > h.min(w)) {
        return Err(Error::arg(format!(
            "grid size {k} exceeds feature map {h}x{w}"
        )));
    }
    let grids = sizes
        .iter()
        .map(|&k| x.adaptive_avg_pool(k)?.reshape([n, c, k * k]))
        .collect::<Result<Vec<_>>>()?;
    Ok(PyramidContext {
        values: Var::concat_last(&grids)?,
    })
}
