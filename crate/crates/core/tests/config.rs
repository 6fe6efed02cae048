use std::path::Path;

use epca::attention::{AttentionSpec, ChannelDepKind, EpcaConfig, FusionVariant};
use epca::config::RunConfig;
use epca::experiment::{self, ABLATION_HEADER};
use epca::train::Paradigm;
use epca::Error;
use proptest::prelude::*;

fn attention_strategy() -> impl Strategy<Value = AttentionSpec> {
    let sizes = prop::sample::select(vec![vec![1], vec![1, 2], vec![1, 3], vec![1, 2, 4], vec![2, 5]]);
    prop_oneof![
        Just(AttentionSpec::None),
        (sizes.clone(), 0usize..4, 0.0f64..0.9, any::<bool>()).prop_map(|(sizes, v, rate, affine)| {
            AttentionSpec::Epca(EpcaConfig {
                sizes,
                variant: FusionVariant::ALL[v],
                dropout_rate: rate,
                bn_affine: affine,
                ..EpcaConfig::default()
            })
        }),
        (1usize..32).prop_map(|reduction| AttentionSpec::Se { reduction }),
        (sizes, 0usize..3, 1usize..32).prop_map(|(sizes, k, reduction)| AttentionSpec::ChannelDep {
            kind: ChannelDepKind::ALL[k],
            sizes,
            reduction,
        }),
    ]
}

proptest! {
    #[test]
    fn canonical_text_parses_back(
        attention in attention_strategy(),
        lr in 1e-4f64..1.0,
        epochs in 1usize..500,
        seed in any::<u64>(),
        freeze in any::<bool>(),
        size in 32usize..256,
        seeds in prop::collection::vec(0u64..100, 1..5),
    ) {
        let mut cfg = RunConfig::default();
        cfg.attention = attention;
        cfg.train.lr_max = lr;
        cfg.train.epochs = epochs;
        cfg.train.seed = seed;
        cfg.train.paradigm = if freeze { Paradigm::PretrainFreeze } else { Paradigm::TraditionalFinetune };
        cfg.data.image_size = size;
        cfg.eval.seeds = seeds;
        let text = cfg.to_string();
        let back = RunConfig::parse(&text, Path::new("")).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}

#[test]
fn layout_and_comments_do_not_change_the_hash() {
    let a = RunConfig::parse("[train]\nepochs = 5\n[attention]\nkind = epca\n", Path::new("")).unwrap();
    let b = RunConfig::parse(
        "; a comment\n[attention]\n  kind=epca   # trailing\n\n[train]\nepochs=5\n",
        Path::new(""),
    )
    .unwrap();
    assert_eq!(a.hash(), b.hash());
    let c = RunConfig::parse("[train]\nepochs = 6\n[attention]\nkind = epca\n", Path::new("")).unwrap();
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn sizes_one_three_give_ten_features() {
    let cfg = RunConfig::parse("[attention]\nkind = epca\nsizes = 1,3\n", Path::new("")).unwrap();
    let AttentionSpec::Epca(e) = &cfg.attention else { panic!() };
    assert_eq!(e.feature_count(), 10);
    let model = experiment::build_model(&cfg, &cfg.attention, 3, 0).unwrap();
    for (_, m) in model.epca_modules() {
        assert_eq!(m.effective_weights().numel(), 10);
    }
}

#[test]
fn value_errors_carry_line_numbers() {
    for (text, line) in [
        ("[train]\nepochs = many\n", 2),
        ("[attention]\n\nkind = transformer\n", 3),
        ("[attention]\nsizes = 3,1\n", 2),
        ("[train]\nhflip = maybe\n", 2),
        ("[data]\nsource = web\n", 2),
        ("[train]\nseed = 1\nseed = 2\n", 3),
        ("[eval]\nbatch_size\n", 2),
    ] {
        match RunConfig::parse(text, Path::new("")) {
            Err(Error::Config { line: l, .. }) => assert_eq!(l, line, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn ablation_report_has_one_row_per_entry() {
    let text = "\
[data]
image_size = 32
synth_train_per_class = 4
synth_test_per_class = 2

[train]
epochs = 1
batch_size = 6

[eval]
seeds = 0,1
";
    let cfg = RunConfig::parse(text, Path::new("")).unwrap();
    let data = experiment::load_datasets(&cfg).unwrap();
    assert_eq!((data.train.len(), data.test.as_ref().unwrap().len()), (12, 6));
    let grid = experiment::parse_size_grid("1|1,3").unwrap();
    let entries = experiment::size_grid(&EpcaConfig::default(), &grid).unwrap();
    let mut runs = 0;
    let report = experiment::ablate(&cfg, "sizes", &entries, &data, &mut |_, _, _| runs += 1).unwrap();
    assert_eq!(runs, 4);
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.row("{1,3}").unwrap().features, Some(10));
    assert_eq!(report.row("{1,3}").unwrap().attention_params, 90);
    assert_eq!(report.row("{1}").unwrap().attention_params, 9);
    let csv = report.to_csv();
    assert_eq!(csv.lines().next(), Some(ABLATION_HEADER));
    assert_eq!(csv.lines().count(), 3);
    assert!(report.to_string().contains("{1,3}"));
}
