use std::collections::BTreeSet;
use std::hint::black_box;

use cfrec_bench::{examples, matrix, model, prepare, prefix, warm_memories};
use cfrec_core::eval::topn_retrieve;
use cfrec_core::losses::Reduction;
use cfrec_core::model::{EncoderLevel, Variant};
use cfrec_core::numkit::{adam_step, dot, matmul, softmax_rows, AdamConfig, AdamState, Dense1, Grads};
use cfrec_core::trainer::{batch_objective, Ablation, ActiveTerms};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernels");
    for n in [64, 256] {
        let a = matrix(1, n, 1);
        let b = matrix(1, n, 2);
        g.bench_with_input(BenchmarkId::new("dot", n), &n, |bench, _| {
            bench.iter(|| dot(black_box(a.data()), black_box(b.data())))
        });
    }
    let x = matrix(20, 64, 3);
    let w = matrix(64, 256, 4);
    g.bench_function("matmul 20x64x256", |b| b.iter(|| matmul(black_box(&x), black_box(&w)).unwrap()));
    g.bench_function("softmax 20x64", |b| b.iter(|| softmax_rows(black_box(&x))));
    g.finish();
}

fn encoders(c: &mut Criterion) {
    let params = model(400);
    let ids = prefix(20, 400, 0);
    let mut g = c.benchmark_group("encoder");
    for (name, level) in [("item", EncoderLevel::Item), ("interest", EncoderLevel::Interest)] {
        g.bench_function(name, |b| b.iter(|| params.user_vector(level, black_box(&ids)).unwrap()));
    }
    g.finish();
}

fn retrieval(c: &mut Criterion) {
    let mut g = c.benchmark_group("top-50 retrieval");
    for n_items in [400, 10_000] {
        let table = matrix(n_items, 64, 5);
        let u = Dense1::new(matrix(1, 64, 6).into_data());
        let exclude: BTreeSet<usize> = prefix(20, n_items, 1).into_iter().collect();
        g.bench_with_input(BenchmarkId::from_parameter(n_items), &n_items, |b, _| {
            b.iter(|| topn_retrieve(black_box(&u), &table, 50, &exclude).unwrap())
        });
    }
    g.finish();
}

fn train_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("train step, batch 32");
    g.sample_size(10);
    for variant in [Variant::Item, Variant::Interest] {
        let params = model(400);
        let exs = examples(32, 400);
        let batch = prepare(&exs, 400);
        let (vcfg, mem) = warm_memories(variant, &params);
        for (label, ablation) in [("base", "base"), ("causal", "full")] {
            let terms = ActiveTerms::new(&Ablation::from_name(ablation).unwrap(), &vcfg, Reduction::Sum);
            g.bench_function(format!("{} {label}", variant.name()), |b| {
                b.iter(|| {
                    let mut p = params.set.clone();
                    let mut grads = Grads::zeros_like(&p);
                    let mut m = mem.clone();
                    batch_objective(&p, &batch, &vcfg, &terms, &mut m, Some(&mut grads)).unwrap();
                    let mut state = AdamState::new(&p);
                    adam_step(&mut p, &grads, &mut state, &AdamConfig::default()).unwrap();
                    p
                })
            });
        }
    }
    g.finish();
}

criterion_group!(benches, kernels, encoders, retrieval, train_step);
criterion_main!(benches);
