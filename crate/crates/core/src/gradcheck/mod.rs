//! Central finite-difference verification of analytic gradients.
//!
//! The op under test maps input leaves to an output of any shape. The output
//! is reduced to a scalar through a fixed random projection, so every output
//! element contributes to the checked gradient.

mod suite;

pub use suite::{case_names, run_suite, SuiteEntry};

use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::rng::seeded;
use crate::tensor::Tensor;

/// Relative error floor: errors on gradients smaller than this are measured
/// on an absolute scale instead.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub eps: f64,
    pub tolerance: f64,
    /// Inputs are resampled while any kink (relu input near 0, near-tied max
    /// pool window) is closer than this.
    pub kink_margin: f64,
    pub max_attempts: usize,
    pub seed: u64,
    /// Inputs are drawn uniformly from `[-range, range]`.
    pub range: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            eps: 1e-5,
            tolerance: 1e-4,
            kink_margin: 1e-3,
            max_attempts: 20,
            seed: 0,
            range: 1.0,
        }
    }
}

impl GradcheckOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        GradcheckOptions {
            tolerance,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    /// `(input index, element index)` of the worst element.
    pub worst: Option<(usize, usize)>,
    pub pass: bool,
    pub attempts: usize,
    pub note: Option<String>,
}

/// Samples inputs of the given shapes and checks `op` at them.
pub fn gradcheck<F>(op: F, input_shapes: &[Vec<usize>], tolerance: f64) -> Result<GradcheckReport>
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    gradcheck_with(op, input_shapes, &GradcheckOptions::with_tolerance(tolerance))
}

pub fn gradcheck_with<F>(
    op: F,
    input_shapes: &[Vec<usize>],
    opts: &GradcheckOptions,
) -> Result<GradcheckReport>
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    let mut rng = seeded(opts.seed);
    let mut attempts = 0;
    loop {
        attempts += 1;
        let inputs: Vec<Tensor<f64>> = input_shapes
            .iter()
            .map(|s| Tensor::uniform(s.clone(), -opts.range, opts.range, &mut rng))
            .collect();
        let g = Graph::new();
        let vars: Vec<_> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        op(&g, &vars)?;
        let clear = g.kink_distance() >= opts.kink_margin;
        if clear || attempts >= opts.max_attempts {
            let mut report = gradcheck_at(&op, &inputs, opts)?;
            report.attempts = attempts;
            if !clear {
                report.note = Some(format!(
                    "kink within {} after {attempts} draws",
                    opts.kink_margin
                ));
            }
            return Ok(report);
        }
    }
}

/// Checks `op` at fixed inputs.
pub fn gradcheck_at<F>(
    op: &F,
    inputs: &[Tensor<f64>],
    opts: &GradcheckOptions,
) -> Result<GradcheckReport>
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    let mut projection_rng = seeded(opts.seed ^ 0x9e37_79b9);
    let probe_graph = Graph::new();
    let probe: Vec<_> = inputs.iter().map(|t| probe_graph.constant(t.clone())).collect();
    let out_shape = op(&probe_graph, &probe)?.shape();
    let projection = Tensor::<f64>::uniform(out_shape, -1.0, 1.0, &mut projection_rng);

    let scalar = |values: &[Tensor<f64>]| -> Result<f64> {
        let g = Graph::new();
        let vars: Vec<_> = values.iter().map(|t| g.constant(t.clone())).collect();
        let out = op(&g, &vars)?;
        Ok(out
            .value()
            .data()
            .iter()
            .zip(projection.data())
            .map(|(a, b)| a * b)
            .sum())
    };

    // analytic
    let g = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = op(&g, &vars)?;
    let loss = out.mul(g.constant(projection.clone()))?.sum();
    g.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| v.grad().unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
        .collect();

    if let Some(i) = analytic
        .iter()
        .position(|t| t.data().iter().any(|v| !v.is_finite()))
    {
        return Ok(GradcheckReport {
            max_rel_err: f64::INFINITY,
            worst: Some((i, 0)),
            pass: false,
            attempts: 1,
            note: Some(format!("non-finite analytic gradient for input {i}")),
        });
    }

    let mut work = inputs.to_vec();
    let mut max_rel_err = 0.0f64;
    let mut worst = None;
    for (i, grad) in analytic.iter().enumerate() {
        for j in 0..inputs[i].numel() {
            let base = inputs[i].data()[j];
            work[i].data_mut()[j] = base + opts.eps;
            let plus = scalar(&work)?;
            work[i].data_mut()[j] = base - opts.eps;
            let minus = scalar(&work)?;
            work[i].data_mut()[j] = base;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let a = grad.data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
            if !(err <= max_rel_err) {
                max_rel_err = err;
                worst = Some((i, j));
            }
        }
    }
    Ok(GradcheckReport {
        max_rel_err,
        worst,
        pass: max_rel_err < opts.tolerance,
        attempts: 1,
        note: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_no_error() {
        let r = gradcheck(|_, x| Ok(x[0]), &[vec![3, 4]], 1e-6).unwrap();
        assert!(r.pass);
        assert!(r.max_rel_err < 1e-9, "{r:?}");
    }

    #[test]
    fn sigmoid_passes_tight_tolerance() {
        let r = gradcheck(|_, x| Ok(x[0].sigmoid()), &[vec![10]], 1e-6).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        // x ⊙ detach(x): the function is x², but the tape only sees one factor
        let r = gradcheck(
            |g, x| {
                let detached = g.constant((*x[0].value()).clone());
                x[0].mul(detached)
            },
            &[vec![5]],
            1e-4,
        )
        .unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn kinks_trigger_resampling() {
        let opts = GradcheckOptions {
            kink_margin: 0.4,
            max_attempts: 3,
            ..Default::default()
        };
        let r = gradcheck_with(|_, x| Ok(x[0].relu()), &[vec![50]], &opts).unwrap();
        // 50 uniform draws almost surely land within 0.4 of zero
        assert_eq!(r.attempts, 3);
        assert!(r.note.is_some());
    }
}
