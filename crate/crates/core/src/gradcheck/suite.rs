//! The standard battery: every differentiable op and every attention
//! variant, each checked at several sampled points.

use std::cell::RefCell;
use std::time::{Duration, Instant};

use super::{gradcheck_with, GradcheckOptions, GradcheckReport};
use crate::attention::{
    ChannelDepKind, ChannelDependency, Epca, EpcaConfig, FusionVariant, SqueezeExcitation,
};
use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::nn::{Mode, Module};
use crate::ops::{self, RunningStats};
use crate::rng::seeded;

type Op = Box<dyn for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>>;

struct Case {
    name: String,
    shapes: Vec<Vec<usize>>,
    op: Op,
}

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: String,
    /// The worst report over all sampled points.
    pub report: GradcheckReport,
    pub elapsed: Duration,
}

fn case<F>(name: &str, shapes: &[&[usize]], op: F) -> Case
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>> + 'static,
{
    Case {
        name: name.to_string(),
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        op: Box::new(op),
    }
}

/// Checks a module with respect to its input and all trainable parameters.
/// `forward` receives the module and the input; parameters are rebound to
/// the sampled values through [`Graph::bind_param`].
fn module_case<M, F>(name: &str, module: M, x_shape: &[usize], forward: F) -> Case
where
    M: Module<f64> + 'static,
    F: for<'g> Fn(&mut M, &'g Graph<f64>, Var<'g, f64>) -> Result<Var<'g, f64>> + 'static,
{
    let mut names = Vec::new();
    let mut shapes = vec![x_shape.to_vec()];
    module.visit_params(&mut |p| {
        if p.trainable {
            names.push(p.name.clone());
            shapes.push(p.value.shape().to_vec());
        }
    });
    let module = RefCell::new(module);
    Case {
        name: name.to_string(),
        shapes,
        op: Box::new(move |g, v| {
            for (name, var) in names.iter().zip(&v[1..]) {
                g.bind_param(name, *var);
            }
            forward(&mut module.borrow_mut(), g, v[0])
        }),
    }
}

fn cases() -> Vec<Case> {
    let mut out = vec![
        case("add", &[&[2, 3], &[2, 3]], |_, v| v[0].add(v[1])),
        case("mul", &[&[2, 3], &[2, 3]], |_, v| v[0].mul(v[1])),
        case("scale", &[&[5]], |_, v| Ok(v[0].scale(-1.7))),
        case("relu", &[&[3, 4]], |_, v| Ok(v[0].relu())),
        case("sigmoid", &[&[3, 4]], |_, v| Ok(v[0].sigmoid())),
        case("dropout", &[&[4, 5]], |_, v| {
            v[0].dropout(0.5, true, &mut seeded(11))
        }),
        case("sum", &[&[2, 3, 2]], |_, v| Ok(v[0].sum())),
        case("mean", &[&[2, 3, 2]], |_, v| Ok(v[0].mean())),
        case("scale_channels", &[&[2, 3, 2, 2], &[2, 3]], |_, v| v[0].scale_channels(v[1])),
        case("reshape", &[&[2, 6]], |_, v| v[0].reshape([3, 4])),
        case("concat_last", &[&[2, 3, 1], &[2, 3, 4]], |_, v| Var::concat_last(&v[..2])),
        case("narrow_last", &[&[2, 3, 5]], |_, v| v[0].narrow_last(1, 3)),
        case("transpose_last2", &[&[2, 3, 4]], |_, v| v[0].transpose_last2()),
        case("sum_axis", &[&[2, 3, 4]], |_, v| v[0].sum_axis(1)),
        case("adaptive_avg_pool", &[&[2, 2, 7, 5]], |_, v| v[0].adaptive_avg_pool(3)),
        case("global_avg_pool", &[&[2, 3, 4, 4]], |_, v| v[0].global_avg_pool()),
        case("max_pool2d", &[&[2, 2, 6, 6]], |_, v| v[0].max_pool2d(3, 2, 1)),
        case("conv2d", &[&[2, 3, 8, 8], &[4, 3, 3, 3], &[4]], |_, v| {
            ops::conv2d(v[0], v[1], Some(v[2]), 1, 1)
        }),
        case("conv2d_stride2", &[&[1, 2, 7, 7], &[3, 2, 3, 3]], |_, v| {
            ops::conv2d(v[0], v[1], None, 2, 1)
        }),
        case("conv2d_pointwise", &[&[2, 3, 4, 4], &[2, 3, 1, 1]], |_, v| {
            ops::conv2d(v[0], v[1], None, 1, 0)
        }),
        case("channel_conv1d", &[&[2, 5, 1], &[3]], |_, v| ops::channel_conv1d(v[0], v[1])),
        case("linear", &[&[3, 4], &[2, 4], &[2]], |_, v| ops::linear(v[0], v[1], Some(v[2]))),
        case("contract_last_shared", &[&[2, 3, 10], &[10]], |_, v| ops::contract_last(v[0], v[1])),
        case("contract_last_per_channel", &[&[2, 3, 10], &[3, 10]], |_, v| {
            ops::contract_last(v[0], v[1])
        }),
        case("batch_norm_train_rank3", &[&[4, 3, 1]], |_, v| {
            ops::batch_norm(v[0], None, None, &mut RunningStats::new(3), true, 1e-5, 0.1)
        }),
        case("batch_norm_train_affine", &[&[3, 2, 3, 3], &[2], &[2]], |_, v| {
            ops::batch_norm(v[0], Some(v[1]), Some(v[2]), &mut RunningStats::new(2), true, 1e-5, 0.1)
        }),
        case("batch_norm_eval", &[&[2, 2, 3, 3], &[2], &[2]], |_, v| {
            ops::batch_norm(v[0], Some(v[1]), Some(v[2]), &mut RunningStats::new(2), false, 1e-5, 0.1)
        }),
        case("softmax_cross_entropy", &[&[4, 3]], |_, v| {
            ops::softmax_cross_entropy(v[0], &[0, 2, 1, 2])
        }),
        case(
            "composite_conv_bn_relu_pool_linear",
            &[&[3, 2, 6, 6], &[4, 2, 3, 3], &[5, 4]],
            |_, v| {
                let y = ops::conv2d(v[0], v[1], None, 1, 1)?;
                let y = ops::batch_norm(y, None, None, &mut RunningStats::new(4), true, 1e-5, 0.1)?;
                let y = y.relu().global_avg_pool()?;
                ops::linear(y, v[2], None)
            },
        ),
    ];

    for variant in FusionVariant::ALL {
        let cfg = EpcaConfig::default().with_variant(variant);
        let module = Epca::new("epca", 3, cfg).expect("default config is valid");
        let name = match variant {
            FusionVariant::Dropout => "epca_dropout_eval".to_string(),
            v => format!("epca_{}", v.to_string().to_lowercase()),
        };
        out.push(module_case(&name, module, &[4, 3, 6, 6], move |m: &mut Epca<f64>, g, x| {
            if variant == FusionVariant::Dropout {
                m.forward(g, x, &mut Mode::Eval)
            } else {
                let mut rng = seeded(5);
                m.forward(g, x, &mut Mode::Train(&mut rng))
            }
        }));
    }
    out.push(module_case(
        "epca_linear_per_channel",
        Epca::new("epca", 3, EpcaConfig { per_channel_weights: true, ..Default::default() })
            .expect("valid config"),
        &[4, 3, 6, 6],
        |m: &mut Epca<f64>, g, x| m.forward(g, x, &mut Mode::Train(&mut seeded(5))),
    ));
    out.push(module_case(
        "epca_linear_affine_bn",
        Epca::new("epca", 3, EpcaConfig { bn_affine: true, ..Default::default() })
            .expect("valid config"),
        &[4, 3, 6, 6],
        |m: &mut Epca<f64>, g, x| m.forward(g, x, &mut Mode::Train(&mut seeded(5))),
    ));
    out.push(module_case(
        "se",
        SqueezeExcitation::new("se", 8, 4, &mut seeded(1)),
        &[2, 8, 3, 3],
        |m: &mut SqueezeExcitation<f64>, g, x| m.forward(g, x),
    ));
    for kind in ChannelDepKind::ALL {
        let module = ChannelDependency::new("pp", kind, &[1, 3], 4, 2, &mut seeded(2));
        out.push(module_case(
            &format!("table2_{}", kind.to_string().to_lowercase()),
            module,
            &[4, 4, 6, 6],
            |m: &mut ChannelDependency<f64>, g, x| m.forward(g, x, &Mode::Train(&mut seeded(5))),
        ));
    }
    out
}

/// Names of all cases, in execution order.
pub fn case_names() -> Vec<String> {
    cases().into_iter().map(|c| c.name).collect()
}

/// Runs every case at `seeds` sampled points and keeps the worst report of
/// each.
pub fn run_suite(tolerance: f64, seeds: u64) -> Result<Vec<SuiteEntry>> {
    let mut entries = Vec::new();
    for c in cases() {
        let start = Instant::now();
        let mut worst: Option<GradcheckReport> = None;
        for seed in 0..seeds.max(1) {
            let opts = GradcheckOptions {
                tolerance,
                seed,
                ..Default::default()
            };
            let report = gradcheck_with(&c.op, &c.shapes, &opts)?;
            if worst.as_ref().is_none_or(|w| !(report.max_rel_err <= w.max_rel_err)) {
                worst = Some(report);
            }
        }
        entries.push(SuiteEntry {
            name: c.name,
            report: worst.expect("at least one seed"),
            elapsed: start.elapsed(),
        });
    }
    Ok(entries)
}
