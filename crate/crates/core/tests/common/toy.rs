use epca::explain::Introspect;
use epca::{Graph, Result, Tensor, Var};

/// Two-channel toy model. The probed layer `feat` is either the input itself
/// or its 2×2 average pool. Class scores:
/// 0: mean of channel 0, 1: 3 × mean of channel 1, 2: minus mean of
/// channel 0, 3: a constant that ignores the layer.
pub struct Toy {
    pub pooled: bool,
}

impl Introspect<f64> for Toy {
    fn layer_names(&self) -> Vec<String> {
        vec!["feat".into()]
    }

    fn forward_tapped<'g>(
        &mut self,
        g: &'g Graph<f64>,
        x: Var<'g, f64>,
        layer: &str,
        tap: &mut dyn FnMut(Var<'g, f64>) -> Var<'g, f64>,
    ) -> Result<Var<'g, f64>> {
        assert_eq!(layer, "feat");
        let a = if self.pooled { x.adaptive_avg_pool(x.shape()[2] / 2)? } else { x };
        let a = tap(a);
        let pick = |w0: f64, w1: f64| -> Result<Var<'g, f64>> {
            let gate = g.constant(Tensor::from_f64s([1, 2], &[w0, w1])?);
            // mean over both channels halves the single-channel mean
            a.scale_channels(gate)?.mean().scale(2.0).reshape([1, 1])
        };
        let constant = g.constant(Tensor::from_f64s([1, 1], &[0.5])?);
        Var::concat_last(&[pick(1.0, 0.0)?, pick(0.0, 3.0)?, pick(-1.0, 0.0)?, constant])
    }
}
