mod common;

use common::{batch_standardize, dot, pool_plane, pyramid, sigmoid};
use epca::attention::{
    mcf, pyramid_pool, scfm_dropout, scfm_hierarchical, scfm_linear, scfm_parallel, Attention,
    AttentionSpec, BranchCombine, ChannelDepKind, ChannelDependency, Epca, EpcaConfig,
    FusionParams, FusionVariant, SqueezeExcitation,
};
use epca::nn::{BatchNorm, Mode, Module, ParamRole};
use epca::rng::seeded;
use epca::{Graph, Tensor, Var};

const EPS: f64 = 1e-5;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::uniform(shape.to_vec(), -1.0, 1.0, &mut seeded(seed))
}

fn norm(c: usize) -> BatchNorm<f64> {
    BatchNorm::new("bn", c, false, EPS, ParamRole::Attention)
}

fn as_rows(t: &Tensor<f64>, n: usize, c: usize) -> Vec<Vec<f64>> {
    (0..n).map(|b| t.data()[b * c..(b + 1) * c].to_vec()).collect()
}

#[test]
fn pyramid_slice_matches_block_means() {
    let x = random(&[1, 1, 6, 6], 1);
    let g = Graph::new();
    let t = pyramid_pool(g.constant(x.clone()), &[1, 3]).unwrap();
    let values = t.values.value();
    assert_eq!(values.shape(), &[1, 1, 10]);
    let oracle = pool_plane(x.data(), 6, 6, 3);
    assert_eq!(&values.data()[1..], &oracle[..]);
    let gap = x.data().iter().sum::<f64>() / 36.0;
    assert!((values.data()[0] - gap).abs() < 1e-15);
}

#[test]
fn linear_fusion_is_a_weighted_sum() {
    let (n, c, h, w) = (3, 4, 5, 6);
    let x = random(&[n, c, h, w], 2);
    let weights = random(&[10], 3);
    let g = Graph::new();
    let t = pyramid_pool(g.constant(x.clone()), &[1, 3]).unwrap();
    let z = scfm_linear(&t, g.constant(weights.clone())).unwrap().value();
    let ctx = pyramid(x.data(), n, c, h, w, &[1, 3]);
    for b in 0..n {
        for ch in 0..c {
            let expect = dot(&ctx[b][ch], weights.data());
            assert!((z.at(&[b, ch, 0]) - expect).abs() < 1e-14);
        }
    }
}

#[test]
fn selector_weight_reduces_to_squeeze() {
    let x = random(&[2, 3, 4, 4], 4);
    let mut e0 = vec![0.0; 10];
    e0[0] = 1.0;
    let g = Graph::new();
    let xv = g.constant(x.clone());
    let t = pyramid_pool(xv, &[1, 3]).unwrap();
    let z = scfm_linear(&t, g.constant(Tensor::from_f64s([10], &e0).unwrap())).unwrap();
    let gap = xv.global_avg_pool().unwrap().value();
    assert_eq!(z.value().data(), gap.data());
}

#[test]
fn null_weights_give_constant_gate() {
    for seed in 0..3 {
        let g = Graph::new();
        let t = pyramid_pool(g.constant(random(&[4, 3, 6, 6], seed)), &[1, 3]).unwrap();
        let z = scfm_linear(&t, g.constant(Tensor::zeros([10]))).unwrap();
        let gate = mcf(&g, z, &mut norm(3), &Mode::Eval).unwrap().value();
        assert!(gate.data().iter().all(|&v| v == 0.5));
    }
}

#[test]
fn dropout_fusion_degenerate_cases() {
    let x = random(&[2, 3, 6, 6], 5);
    let w = random(&[10], 6);
    let g = Graph::new();
    let t = pyramid_pool(g.constant(x), &[1, 3]).unwrap();
    let wv = g.constant(w);
    let linear = scfm_linear(&t, wv).unwrap().value();
    let mut rng = seeded(0);
    let rate0 = scfm_dropout(&t, wv, 0.0, true, &mut rng).unwrap().value();
    let eval = scfm_dropout(&t, wv, 0.5, false, &mut rng).unwrap().value();
    assert_eq!(rate0, linear);
    assert_eq!(eval, linear);
}

#[test]
fn dropout_fusion_is_unbiased() {
    // Monte-Carlo mean of the training-mode output within 3 SE of the
    // deterministic linear fusion.
    let x = random(&[1, 2, 6, 6], 7);
    let w = random(&[10], 8);
    let g = Graph::new();
    let t = pyramid_pool(g.constant(x), &[1, 3]).unwrap();
    let wv = g.constant(w);
    let linear = scfm_linear(&t, wv).unwrap().value();
    let mut rng = seeded(9);
    let trials = 10_000;
    let mut samples = vec![Vec::with_capacity(trials); 2];
    for _ in 0..trials {
        let z = scfm_dropout(&t, wv, 0.5, true, &mut rng).unwrap().value();
        for (s, v) in samples.iter_mut().zip(z.data()) {
            s.push(*v);
        }
    }
    for (s, expect) in samples.iter().zip(linear.data()) {
        let mean = s.iter().sum::<f64>() / trials as f64;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * se, "mean {mean} vs {expect} (se {se})");
    }
}

#[test]
fn hierarchical_fusion_two_stage_oracle() {
    let (n, c, h, w) = (2, 3, 6, 6);
    let sizes = [1, 2, 3];
    let x = random(&[n, c, h, w], 10);
    let us: Vec<Tensor<f64>> = sizes.iter().map(|&k| random(&[k * k], 11 + k as u64)).collect();
    let v = random(&[3], 20);
    let g = Graph::new();
    let t = pyramid_pool(g.constant(x.clone()), &sizes).unwrap();
    let uv: Vec<_> = us.iter().map(|u| g.constant(u.clone())).collect();
    let z = scfm_hierarchical(&t, &sizes, &uv, g.constant(v.clone())).unwrap().value();
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * h * w;
            let plane = &x.data()[start..start + h * w];
            let expect: f64 = sizes
                .iter()
                .enumerate()
                .map(|(i, &k)| v.data()[i] * dot(&pool_plane(plane, h, w, k), us[i].data()))
                .sum();
            assert!((z.at(&[b, ch, 0]) - expect).abs() < 1e-14);
        }
    }
    assert!(scfm_hierarchical(&t, &sizes, &uv[..2], g.constant(v)).is_err());
}

#[test]
fn hierarchical_averaging_weights_sum_scale_means() {
    let sizes = [1, 2, 3];
    let x = random(&[2, 2, 6, 6], 21);
    let g = Graph::new();
    let xv = g.constant(x);
    let t = pyramid_pool(xv, &sizes).unwrap();
    let us: Vec<_> = sizes
        .iter()
        .map(|&k| g.constant(Tensor::full([k * k], 1.0 / (k * k) as f64)))
        .collect();
    let z = scfm_hierarchical(&t, &sizes, &us, g.constant(Tensor::ones([3]))).unwrap();
    let gap = xv.global_avg_pool().unwrap().value();
    // 6 divides evenly by 1, 2, 3, so each scale's mean is the channel mean
    for (zv, m) in z.value().data().iter().zip(gap.data()) {
        assert!((zv - 3.0 * m).abs() < 1e-14);
    }
}

#[test]
fn single_scale_hierarchical_collapses_to_linear() {
    let x = random(&[3, 2, 5, 5], 22);
    let u = random(&[1], 23);
    let v = random(&[1], 24);
    let g = Graph::new();
    let t = pyramid_pool(g.constant(x), &[1]).unwrap();
    let hier = scfm_hierarchical(&t, &[1], &[g.constant(u.clone())], g.constant(v.clone()))
        .unwrap()
        .value();
    let w = Tensor::from_f64s([1], &[u.data()[0] * v.data()[0]]).unwrap();
    let lin = scfm_linear(&t, g.constant(w)).unwrap().value();
    assert!(hier.max_abs_diff(&lin) < 1e-15);
}

#[test]
fn mcf_hand_values() {
    let g = Graph::new();
    // zero input, no affine: sigma(0) everywhere
    let z = g.constant(Tensor::zeros([4, 3, 1]));
    let gate = mcf(&g, z, &mut norm(3), &Mode::Eval).unwrap().value();
    assert!(gate.data().iter().all(|&v| v == 0.5));

    // batch {-1, +1} per channel: normalized to ±1/sqrt(1 + eps)
    let z = g.constant(Tensor::from_f64s([2, 2, 1], &[-1.0, 1.0, 1.0, -1.0]).unwrap());
    let mut rng = seeded(0);
    let gate = mcf(&g, z, &mut norm(2), &Mode::Train(&mut rng)).unwrap().value();
    let hi = sigmoid(1.0 / (1.0 + EPS).sqrt());
    let lo = sigmoid(-1.0 / (1.0 + EPS).sqrt());
    let expect = [lo, hi, hi, lo];
    for (a, b) in gate.data().iter().zip(expect) {
        assert!((a - b).abs() < 1e-15);
    }

    // eval with running statistics
    let mut bn = norm(1);
    bn.stats.mean.data_mut()[0] = 0.3;
    bn.stats.var.data_mut()[0] = 2.0;
    let z = g.constant(Tensor::from_f64s([1, 1, 1], &[1.7]).unwrap());
    let gate = mcf(&g, z, &mut bn, &Mode::Eval).unwrap().value();
    let expect = sigmoid((1.7 - 0.3) / (2.0 + EPS).sqrt());
    assert!((gate.data()[0] - expect).abs() < 1e-15);
}

#[test]
fn parallel_branch_by_branch_oracle() {
    let (n, c, h, w) = (4, 3, 6, 6);
    let sizes = [1, 3];
    let x = random(&[n, c, h, w], 30);
    let us: Vec<Tensor<f64>> = sizes.iter().map(|&k| random(&[k * k], 31 + k as u64)).collect();
    let g = Graph::new();
    let t = pyramid_pool(g.constant(x.clone()), &sizes).unwrap();
    let uv: Vec<_> = us.iter().map(|u| g.constant(u.clone())).collect();
    let mut norms = vec![norm(c), norm(c)];
    let mut rng = seeded(0);
    let gate = scfm_parallel(&g, &t, &sizes, &uv, &mut norms, &Mode::Train(&mut rng), BranchCombine::Mean)
        .unwrap()
        .value();

    let mut branch_gates = Vec::new();
    for (i, &k) in sizes.iter().enumerate() {
        let z: Vec<Vec<f64>> = (0..n)
            .map(|b| {
                (0..c)
                    .map(|ch| {
                        let start = (b * c + ch) * h * w;
                        dot(&pool_plane(&x.data()[start..start + h * w], h, w, k), us[i].data())
                    })
                    .collect()
            })
            .collect();
        branch_gates.push(batch_standardize(&z, EPS));
    }
    for b in 0..n {
        for ch in 0..c {
            let expect = branch_gates.iter().map(|z| sigmoid(z[b][ch])).sum::<f64>() / 2.0;
            assert!((gate.at(&[b, ch, 0]) - expect).abs() < 1e-14);
        }
    }
}

#[test]
fn parallel_single_branch_equals_linear_pipeline() {
    let x = random(&[4, 3, 5, 5], 40);
    let u = random(&[1], 41);
    let g = Graph::new();
    let t = pyramid_pool(g.constant(x), &[1]).unwrap();
    let uv = g.constant(u);
    let mut rng = seeded(0);
    let par = scfm_parallel(&g, &t, &[1], &[uv], &mut [norm(3)], &Mode::Train(&mut rng), BranchCombine::Mean)
        .unwrap()
        .value();
    let z = scfm_linear(&t, uv).unwrap();
    let lin = mcf(&g, z, &mut norm(3), &Mode::Train(&mut rng)).unwrap().value();
    assert_eq!(par, lin);
}

#[test]
fn parallel_null_encoders_constant_gate() {
    let g = Graph::new();
    let t = pyramid_pool(g.constant(random(&[3, 2, 6, 6], 42)), &[1, 3]).unwrap();
    let uv = [g.constant(Tensor::zeros([1])), g.constant(Tensor::zeros([9]))];
    let mut rng = seeded(0);
    let gate = scfm_parallel(&g, &t, &[1, 3], &uv, &mut [norm(2), norm(2)], &Mode::Train(&mut rng), BranchCombine::Mean)
        .unwrap()
        .value();
    assert!(gate.data().iter().all(|&v| v == 0.5));
}

fn epca(variant: FusionVariant, c: usize) -> Epca<f64> {
    Epca::new("epca", c, EpcaConfig::default().with_variant(variant)).unwrap()
}

#[test]
fn parameter_counts_per_variant() {
    for c in [4, 64, 512] {
        assert_eq!(epca(FusionVariant::Linear, c).param_count(), 10);
        assert_eq!(epca(FusionVariant::Dropout, c).param_count(), 10);
        assert_eq!(epca(FusionVariant::Hierarchical, c).param_count(), 12);
        assert_eq!(epca(FusionVariant::Parallel, c).param_count(), 10);
    }
    let mut cfg = EpcaConfig::default();
    cfg.bn_affine = true;
    assert_eq!(Epca::<f64>::new("e", 16, cfg).unwrap().param_count(), 10 + 32);
}

#[test]
fn gate_attenuates_and_preserves_sign() {
    for variant in FusionVariant::ALL {
        let mut m = epca(variant, 3);
        let x = random(&[4, 3, 6, 6], 50);
        let g = Graph::new();
        let mut rng = seeded(1);
        let y = m.forward(&g, g.constant(x.clone()), &mut Mode::Train(&mut rng)).unwrap().value();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!(b.abs() < a.abs() || *a == 0.0);
            assert!(a.signum() == b.signum() || *b == 0.0);
        }
    }
}

#[test]
fn bypassed_module_is_identity() {
    let mut m = epca(FusionVariant::Linear, 3);
    m.bypass = true;
    let x = random(&[2, 3, 4, 4], 51);
    let g = Graph::new();
    let y = m.forward(&g, g.constant(x.clone()), &mut Mode::Eval).unwrap().value();
    assert_eq!(*y, x);
}

#[test]
fn spatially_constant_input_collapses() {
    // every feature equals the channel value, so z = (Σw)·value
    let mut m = epca(FusionVariant::Linear, 2);
    if let FusionParams::Linear { w } = &mut m.fusion {
        w.value = random(&[10], 52);
    }
    let sum_w: f64 = m.effective_weights().data().iter().sum();
    let mut data = Vec::new();
    for v in [0.2, -0.7, 1.1, 0.4] {
        data.extend(std::iter::repeat(v).take(16));
    }
    let x = Tensor::from_f64s([2, 2, 4, 4], &data).unwrap();
    let g = Graph::new();
    let t = pyramid_pool(g.constant(x), &[1, 3]).unwrap();
    let z = scfm_linear(&t, g.constant(m.effective_weights())).unwrap().value();
    for (zv, v) in z.data().iter().zip([0.2, -0.7, 1.1, 0.4]) {
        assert!((zv - sum_w * v).abs() < 1e-14);
    }
}

fn gate_of(att: &mut Attention<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let g = Graph::new();
    let xv = g.constant(x.clone());
    let mut rng = seeded(99);
    let mut mode = Mode::Train(&mut rng);
    let gate: Var<f64> = match att {
        Attention::Epca(m) => m.gate(&g, xv, &mut mode).unwrap().1,
        Attention::Se(m) => m.gate(&g, xv).unwrap(),
        Attention::ChannelDep(m) => m.gate(&g, xv, &mode).unwrap(),
    };
    (*gate.value()).clone()
}

#[test]
fn fusion_variants_never_mix_channels() {
    let (n, c, h, w) = (3, 4, 6, 6);
    let mut rng = seeded(60);
    for variant in FusionVariant::ALL {
        let spec = AttentionSpec::Epca(EpcaConfig::default().with_variant(variant));
        let mut att = Attention::build(&spec, "a", c, &mut rng).unwrap().unwrap();
        let x = random(&[n, c, h, w], 61);
        let base = gate_of(&mut att, &x);
        for trial in 0..10 {
            let perturbed_channel = trial % c;
            let mut x2 = x.clone();
            let noise = random(&[n, h, w], 100 + trial as u64);
            for b in 0..n {
                for i in 0..h * w {
                    x2.data_mut()[(b * c + perturbed_channel) * h * w + i] += 3.0 * noise.data()[b * h * w + i];
                }
            }
            let moved = gate_of(&mut att, &x2);
            for b in 0..n {
                for ch in (0..c).filter(|&ch| ch != perturbed_channel) {
                    assert_eq!(base.at(&[b, ch, 0]), moved.at(&[b, ch, 0]), "{variant} ch {ch}");
                }
            }
        }
    }
}

#[test]
fn squeeze_excitation_matches_direct_evaluation() {
    let (n, c, h, w) = (2, 8, 4, 4);
    let se = SqueezeExcitation::<f64>::new("se", c, 4, &mut seeded(70));
    let x = random(&[n, c, h, w], 71);
    let g = Graph::new();
    let y = se.forward(&g, g.constant(x.clone())).unwrap().value();
    let (w1, b1) = (&se.fc1.weight.value, &se.fc1.bias.as_ref().unwrap().value);
    let (w2, b2) = (&se.fc2.weight.value, &se.fc2.bias.as_ref().unwrap().value);
    for b in 0..n {
        let squeeze: Vec<f64> = (0..c)
            .map(|ch| x.data()[(b * c + ch) * h * w..(b * c + ch + 1) * h * w].iter().sum::<f64>() / (h * w) as f64)
            .collect();
        let hidden: Vec<f64> = (0..2)
            .map(|j| (dot(&w1.data()[j * c..(j + 1) * c], &squeeze) + b1.data()[j]).max(0.0))
            .collect();
        for ch in 0..c {
            let s = sigmoid(dot(&w2.data()[ch * 2..(ch + 1) * 2], &hidden) + b2.data()[ch]);
            for i in 0..h * w {
                let at = (b * c + ch) * h * w + i;
                assert!((y.data()[at] - x.data()[at] * s).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn channel_dependency_heads_match_direct_evaluation() {
    let (n, c, h, w) = (3, 4, 6, 6);
    let sizes = [1, 3];
    let f = 10;
    let x = random(&[n, c, h, w], 80);
    let ctx = pyramid(x.data(), n, c, h, w, &sizes);
    for kind in ChannelDepKind::ALL {
        let head = ChannelDependency::<f64>::new("pp", kind, &sizes, c, 2, &mut seeded(81));
        let g = Graph::new();
        let xv = g.constant(x.clone());
        let t = pyramid_pool(xv, &sizes).unwrap();
        let z = head.encode(&g, xv, &t).unwrap().value();

        let mut params = Vec::new();
        head.visit_params(&mut |p| params.push(p.value.clone()));
        let expect: Vec<Vec<f64>> = (0..n)
            .map(|b| match kind {
                ChannelDepKind::Mlp => {
                    let flat: Vec<f64> = ctx[b].iter().flatten().copied().collect();
                    let (w1, b1, w2, b2) = (&params[0], &params[1], &params[2], &params[3]);
                    let hidden: Vec<f64> = (0..2)
                        .map(|j| (dot(&w1.data()[j * c * f..(j + 1) * c * f], &flat) + b1.data()[j]).max(0.0))
                        .collect();
                    (0..c).map(|ch| dot(&w2.data()[ch * 2..ch * 2 + 2], &hidden) + b2.data()[ch]).collect()
                }
                ChannelDepKind::SharedMlp => {
                    let (w1, b1, w2, b2) = (&params[0], &params[1], &params[2], &params[3]);
                    let mut acc = vec![0.0; c];
                    for feat in 0..f {
                        let column: Vec<f64> = (0..c).map(|ch| ctx[b][ch][feat]).collect();
                        let hidden: Vec<f64> = (0..2)
                            .map(|j| (dot(&w1.data()[j * c..(j + 1) * c], &column) + b1.data()[j]).max(0.0))
                            .collect();
                        for ch in 0..c {
                            acc[ch] += dot(&w2.data()[ch * 2..ch * 2 + 2], &hidden) + b2.data()[ch];
                        }
                    }
                    acc
                }
                ChannelDepKind::Cic => {
                    let k = params[0].data();
                    let gap: Vec<f64> = (0..c).map(|ch| ctx[b][ch][0]).collect();
                    (0..c)
                        .map(|ch| {
                            let left = if ch > 0 { gap[ch - 1] } else { 0.0 };
                            let right = if ch + 1 < c { gap[ch + 1] } else { 0.0 };
                            k[0] * left + k[1] * gap[ch] + k[2] * right
                        })
                        .collect()
                }
            })
            .collect();
        for b in 0..n {
            for ch in 0..c {
                assert!((z.at(&[b, ch, 0]) - expect[b][ch]).abs() < 1e-13, "{kind}");
            }
        }
    }
}

#[test]
fn zero_mlp_head_gives_constant_gate() {
    let mut head = ChannelDependency::<f64>::new("pp", ChannelDepKind::Mlp, &[1, 3], 4, 2, &mut seeded(0));
    head.visit_params_mut(&mut |p| p.value.data_mut().fill(0.0));
    let g = Graph::new();
    let mut rng = seeded(1);
    let gate = head
        .gate(&g, g.constant(random(&[3, 4, 6, 6], 2)), &Mode::Train(&mut rng))
        .unwrap()
        .value();
    assert!(gate.data().iter().all(|&v| v == 0.5));
}

#[test]
fn batch_norm_training_matches_oracle() {
    let z = random(&[5, 3, 1], 90);
    let g = Graph::new();
    let mut rng = seeded(0);
    let out = mcf(&g, g.constant(z.clone()), &mut norm(3), &Mode::Train(&mut rng)).unwrap().value();
    let expect = batch_standardize(&as_rows(&z, 5, 3), EPS);
    for b in 0..5 {
        for ch in 0..3 {
            assert!((out.at(&[b, ch, 0]) - sigmoid(expect[b][ch])).abs() < 1e-14);
        }
    }
}
