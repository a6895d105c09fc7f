use cfrec_core::causal::{reset_op_counts, op_counts, VariantConfig};
use cfrec_core::data::{split_users, SyntheticConfig, TrainingExample};
use cfrec_core::eval::evaluate;
use cfrec_core::losses::Reduction;
use cfrec_core::model::{ModelConfig, Variant};
use cfrec_core::trainer::{train, Ablation, TrainConfig, TrainOutcome, TrainingData};

fn fixture(seed: u64) -> TrainingData {
    let log = SyntheticConfig {
        n_users: 200,
        n_items: 60,
        n_clusters: 4,
        seq_len: 10,
        noise_rate: 0.3,
        seed,
    }
    .generate()
    .unwrap()
    .log;
    let split = split_users(&log, (8, 1, 1), seed).unwrap();
    let cfg = TrainConfig::new(Variant::Item);
    TrainingData::from_split(&log, &split, &cfg).unwrap()
}

fn small_model(n_items: usize) -> ModelConfig {
    ModelConfig {
        n_items,
        dim: 8,
        hidden: 16,
        attn_dim: 6,
        n_concepts: 4,
    }
}

fn run(data: &TrainingData, variant: Variant, seed: u64, edit: impl Fn(&mut TrainConfig, &mut VariantConfig)) -> TrainOutcome {
    let mut cfg = TrainConfig::new(variant);
    cfg.epochs = 2;
    cfg.batch_size = 64;
    cfg.seed = seed;
    cfg.patience = 0;
    let mut vcfg = VariantConfig::new(variant);
    vcfg.k = 4;
    vcfg.memory_capacity = 64;
    edit(&mut cfg, &mut vcfg);
    train(data, &small_model(data.n_items), &cfg, &vcfg, &mut |_| Ok(())).unwrap()
}

#[test]
fn same_seed_same_bits() {
    let data = fixture(1);
    for variant in [Variant::Item, Variant::Hierarchical] {
        let a = run(&data, variant, 5, |_, _| {});
        let b = run(&data, variant, 5, |_, _| {});
        assert_eq!(a.final_params, b.final_params, "{variant:?}");
        assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.loss, y.loss);
        }
        let c = run(&data, variant, 6, |_, _| {});
        assert_ne!(a.final_params, c.final_params);
    }
}

#[test]
fn zero_weights_and_disabled_terms_train_identically() {
    let data = fixture(2);
    let zero = run(&data, Variant::Item, 3, |_, v| {
        v.lambda1 = 0.0;
        v.lambda2 = 0.0;
    });
    let off = run(&data, Variant::Item, 3, |c, _| c.ablation = Ablation::from_name("base").unwrap());
    assert_eq!(zero.final_params, off.final_params);
    for r in &off.records {
        assert_eq!(r.loss.total, r.loss.matching);
    }
}

#[test]
fn memory_never_exceeds_capacity() {
    let data = fixture(3);
    for variant in [Variant::Item, Variant::Interest] {
        let out = run(&data, variant, 1, |_, v| v.memory_capacity = 17);
        assert!(out.peak_memory_len <= 17, "{variant:?}");
        assert!(out.peak_memory_len > 0);
    }
}

#[test]
fn loss_trends_down_during_the_first_epoch() {
    for seed in 0..5 {
        let data = fixture(10 + seed);
        let out = run(&data, Variant::Item, seed, |c, _| {
            c.epochs = 1;
            c.batch_size = 16;
            c.co_reduction = Reduction::Mean;
        });
        let q = out.records.len() / 4;
        let mean = |r: &[cfrec_core::trainer::TrainLogRecord]| r.iter().map(|r| r.loss.total).sum::<f64>() / r.len() as f64;
        let head = mean(&out.records[..q]);
        let tail = mean(&out.records[out.records.len() - q..]);
        assert!(tail < head, "seed {seed}: {head} -> {tail}");
    }
}

#[test]
fn short_prefixes_use_matching_loss_only() {
    let mut data = fixture(4);
    data.examples = vec![
        TrainingExample { user: 0, prefix: vec![3], target: 5 },
        TrainingExample { user: 1, prefix: vec![7], target: 2 },
    ];
    let out = run(&data, Variant::Hierarchical, 0, |_, _| {});
    for r in &out.records {
        assert_eq!(r.loss.total, r.loss.matching);
    }
}

#[test]
fn serving_touches_no_counterfactual_code() {
    let data = fixture(5);
    let out = run(&data, Variant::Item, 2, |_, _| {});
    let base = run(&data, Variant::Item, 2, |c, _| c.ablation = Ablation::from_name("base").unwrap());
    assert_ne!(out.final_params, base.final_params);
    reset_op_counts();
    let report = evaluate(&out.final_params, Variant::Item, &data.validation, &[20, 50]).unwrap();
    assert_eq!(op_counts().total(), 0);
    assert!(report.n_users_evaluated > 0);
}
