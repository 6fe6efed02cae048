mod common;

use common::toy::Toy;
use epca::attention::{AttentionSpec, EpcaConfig, FusionParams, FusionVariant};
use epca::data::netpbm;
use epca::data::{Dataset, Split};
use epca::explain::{
    contributions, export_scale_weight_stats, grad_cam, normalize, summarize, STATS_HEADER,
};
use epca::network::{ArchSpec, Network};
use epca::nn::Mode;
use epca::rng::seeded;
use epca::{Error, Graph, Tensor};
use proptest::prelude::*;

fn positive_image(h: usize, w: usize, seed: u64) -> Tensor<f64> {
    Tensor::uniform([2, h, w], 0.1, 1.0, &mut seeded(seed))
}

fn max_normalized(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::MIN, f64::max);
    v.iter().map(|x| x / m).collect()
}

#[test]
fn linear_score_gives_the_channel_itself() {
    let (h, w) = (6, 5);
    let image = positive_image(h, w, 1);
    let d = image.data();
    for (class, channel) in [(0, 0), (1, 1)] {
        let map = grad_cam(&mut Toy { pooled: false }, &image, class, "feat").unwrap();
        assert_eq!((map.height, map.width), (h, w));
        let expected = max_normalized(&d[channel * h * w..(channel + 1) * h * w]);
        for (a, b) in map.values.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn coarse_layer_is_upsampled_bilinearly() {
    let (h, w) = (8, 8);
    let image = positive_image(h, w, 2);
    let map = grad_cam(&mut Toy { pooled: true }, &image, 0, "feat").unwrap();
    let coarse = common::pool_plane(&image.data()[..h * w], h, w, 4);
    let expected = max_normalized(&common::upsample(&coarse, 4, 4, h, w));
    for (a, b) in map.values.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn no_positive_evidence_gives_zero_map() {
    let image = positive_image(4, 4, 3);
    for class in [2, 3] {
        let map = grad_cam(&mut Toy { pooled: false }, &image, class, "feat").unwrap();
        assert!(map.values.iter().all(|&v| v == 0.0), "class {class}");
    }
}

#[test]
fn bad_layer_or_class_is_rejected() {
    let image = positive_image(4, 4, 4);
    let err = grad_cam(&mut Toy { pooled: false }, &image, 0, "nope").unwrap_err();
    assert!(matches!(err, Error::Argument(_)));
    assert!(grad_cam(&mut Toy { pooled: false }, &image, 4, "feat").is_err());
}

fn mini(attention: AttentionSpec, seed: u64) -> Network<f32> {
    let spec = ArchSpec::preset("mini-resnet20", attention, 3, (1, 32, 32)).unwrap();
    Network::build(&spec, &mut seeded(seed)).unwrap()
}

#[test]
fn network_maps_are_in_range_at_every_layer() {
    let mut net = mini(AttentionSpec::Epca(EpcaConfig::default()), 5);
    let image = Tensor::<f32>::uniform([1, 32, 32], 0.0, 1.0, &mut seeded(6));
    for layer in net.layer_names() {
        for class in 0..3 {
            let map = grad_cam(&mut net, &image, class, &layer).unwrap();
            assert_eq!(map.values.len(), 32 * 32);
            assert!(map.values.iter().all(|v| (0.0..=1.0).contains(v)));
            let max = map.values.iter().cloned().fold(0.0, f64::max);
            assert!(max == 1.0 || max == 0.0, "{layer}: max {max}");
        }
    }
}

#[test]
fn zero_head_means_zero_gradient_and_zero_map() {
    let mut net = mini(AttentionSpec::None, 7);
    net.head.zero_init();
    let image = Tensor::<f32>::uniform([1, 32, 32], 0.0, 1.0, &mut seeded(8));
    let map = grad_cam(&mut net, &image, 1, "stage3.block2").unwrap();
    assert!(map.values.iter().all(|&v| v == 0.0));
}

#[test]
fn heatmap_pgm_round_trips() {
    let mut net = mini(AttentionSpec::Epca(EpcaConfig::default()), 9);
    let image = Tensor::<f32>::uniform([1, 32, 32], 0.0, 1.0, &mut seeded(10));
    let map = grad_cam(&mut net, &image, 0, "stage2.block1").unwrap();
    let decoded = netpbm::decode(&map.to_pgm()).unwrap();
    assert_eq!((decoded.channels, decoded.height, decoded.width), (1, 32, 32));
    for (d, v) in decoded.data.iter().zip(&map.values) {
        assert_eq!((d * 255.0).round() as u8, (v * 255.0).round() as u8);
    }
    assert_eq!(map.to_csv().lines().count(), 32);
}

proptest! {
    #[test]
    fn normalizing_twice_changes_nothing(v in prop::collection::vec(0.0f64..10.0, 1..50)) {
        let once = normalize(&v);
        prop_assert_eq!(normalize(&once), once);
    }
}

fn dataset(images: &[Vec<f32>]) -> Dataset {
    let mut ds = Dataset::new((1, 32, 32), vec!["a".into(), "b".into(), "c".into()], Split::Test);
    for (i, img) in images.iter().enumerate() {
        ds.push(img, i % 3, format!("{i}.pgm")).unwrap();
    }
    ds
}

fn random_images(n: usize, seed: u64) -> Vec<Vec<f32>> {
    (0..n)
        .map(|i| Tensor::<f32>::uniform([32 * 32], 0.0, 1.0, &mut seeded(seed + i as u64)).into_data())
        .collect()
}

#[test]
fn stats_match_direct_computation_on_two_samples() {
    let mut net = mini(AttentionSpec::Epca(EpcaConfig::default()), 11);
    let weights: Vec<f64> = (0..10).map(|j| (j as f64 - 4.5) / 3.0).collect();
    for (_, m) in net.epca_modules_mut() {
        let FusionParams::Linear { w } = &mut m.fusion else { unreachable!() };
        w.value = Tensor::from_f64s([10], &weights).unwrap();
    }
    let images = random_images(2, 20);
    let ds = dataset(&images);
    let stats = export_scale_weight_stats(&mut net, &ds, 2).unwrap();
    assert_eq!(
        stats.stages.iter().map(|s| s.stage.as_str()).collect::<Vec<_>>(),
        ["low", "mid", "high"]
    );

    let (x, _) = ds.batch(&[0, 1]);
    let g = Graph::new();
    let trace = net.trace(&g, g.constant(x), &mut Mode::Eval).unwrap();
    for stage in &stats.stages {
        let input = trace.attention_inputs.iter().find(|(n, _)| *n == stage.block).unwrap().1.value();
        let s = input.shape();
        let data: Vec<f64> = input.data().iter().map(|&v| v as f64).collect();
        let t = common::pyramid(&data, s[0], s[1], s[2], s[3], &[1, 3]);
        let oracle: Vec<Vec<f64>> = t
            .iter()
            .map(|per_channel| {
                (0..10)
                    .map(|f| per_channel.iter().map(|row| (weights[f] * row[f]).abs()).sum::<f64>() / s[1] as f64)
                    .collect()
            })
            .collect();
        for (row, want) in stage.per_sample.iter().zip(&oracle) {
            for (a, b) in row.iter().zip(want) {
                assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-3), "{}: {a} vs {b}", stage.stage);
            }
        }
        // two samples: mean, population std and quartiles by hand
        let csv = stage.stats_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(STATS_HEADER));
        let total: f64 = (0..10).map(|f| (oracle[0][f] + oracle[1][f]) / 2.0).sum();
        for (f, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[0], stage.stage);
            assert_eq!(cells[1], f.to_string());
            let v: Vec<f64> = cells[2..].iter().map(|c| c.parse().unwrap()).collect();
            let (a, b) = (oracle[0][f].min(oracle[1][f]), oracle[0][f].max(oracle[1][f]));
            let mean = (a + b) / 2.0;
            let want = [mean, (b - a) / 2.0, a + (b - a) / 4.0, mean, a + 3.0 * (b - a) / 4.0, mean / total];
            // spread and quartiles inherit the f32 rounding of the larger value
            for (got, want) in v.iter().zip(want) {
                assert!((got - want).abs() <= 1e-5 * b.max(1e-3), "{got} vs {want}");
            }
        }
        assert_eq!(stage.samples_csv().lines().next().unwrap().split(',').count(), 10);
    }
}

#[test]
fn constant_context_contributions_follow_weights() {
    let w = Tensor::from_f64s([4], &[0.5, -2.0, 1.0, 0.0]).unwrap();
    let t = Tensor::full([3, 2, 4], 0.7f32);
    let c = contributions(&t, &w).unwrap();
    for row in &c {
        for (got, wf) in row.iter().zip([0.5, 2.0, 1.0, 0.0]) {
            assert!((got - 0.7 * wf).abs() < 1e-6);
        }
    }
    let s = summarize(&c);
    assert!(s.iter().all(|f| f.std == 0.0));
    assert!((s[1].normalized_mean - 2.0 / 3.5).abs() < 1e-9);
}

#[test]
fn export_is_deterministic_and_sized_by_features() {
    let images = random_images(5, 30);
    let ds = dataset(&images);
    for variant in [FusionVariant::Linear, FusionVariant::Hierarchical, FusionVariant::Parallel] {
        let spec = AttentionSpec::Epca(EpcaConfig::default().with_variant(variant));
        let mut net = mini(spec, 12);
        let a = export_scale_weight_stats(&mut net, &ds, 2).unwrap();
        let b = export_scale_weight_stats(&mut net, &ds, 5).unwrap();
        for (x, y) in a.stages.iter().zip(&b.stages) {
            assert_eq!(x.features.len(), 10);
            assert_eq!(x.stats_csv().lines().count(), 11);
            for (p, q) in x.per_sample.iter().flatten().zip(y.per_sample.iter().flatten()) {
                assert!((p - q).abs() <= 1e-6 * p.abs().max(1e-3));
            }
        }
        assert_eq!(a, export_scale_weight_stats(&mut net, &ds, 2).unwrap());
    }
    let dir = tempfile::tempdir().unwrap();
    let stats = export_scale_weight_stats(&mut mini(AttentionSpec::Epca(EpcaConfig::default()), 1), &ds, 4).unwrap();
    let files = stats.write(dir.path()).unwrap();
    assert_eq!(files.len(), 7);
    assert!(dir.path().join("stats_mid.csv").exists());
}

#[test]
fn export_needs_epca() {
    let ds = dataset(&random_images(2, 40));
    for spec in [AttentionSpec::None, AttentionSpec::Se { reduction: 16 }] {
        let err = export_scale_weight_stats(&mut mini(spec, 0), &ds, 2).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }
}
