use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use judgekit_bench::{completions, points};
use judgekit_core::losses::grpo_advantages;
use judgekit_core::pipeline::kmeans;
use judgekit_core::policy::{train_curriculum, StageSchedule, TrainConfig};
use judgekit_core::synth::{consistency_benchmark, BenchmarkConfig};
use judgekit_core::{consistency_reward, RewardOptions, TaskType};
use std::hint::black_box;

fn rewards(c: &mut Criterion) {
    let texts = completions(1000);
    c.bench_function("reward/pp_1000", |b| {
        b.iter(|| {
            texts
                .iter()
                .map(|t| consistency_reward(t, TaskType::Pp, &7.into(), Some(4), RewardOptions::default()).unwrap().value)
                .sum::<f64>()
        })
    });
}

fn advantages(c: &mut Criterion) {
    let groups: Vec<Vec<f64>> = (0..1000).map(|g| (0..8).map(|j| ((g * 7 + j * 3) % 5) as f64 * 0.5).collect()).collect();
    c.bench_function("grpo_advantages/1000x8", |b| {
        b.iter(|| groups.iter().map(|g| grpo_advantages(black_box(g)).len()).sum::<usize>())
    });
}

fn clustering(c: &mut Criterion) {
    let pts = points(2000);
    let mut g = c.benchmark_group("kmeans");
    g.sample_size(10);
    g.bench_function("2000x256_k8", |b| b.iter(|| kmeans(black_box(&pts), 8, 3).unwrap().iterations));
    g.finish();
}

fn training(c: &mut Criterion) {
    let cfg = BenchmarkConfig::default();
    let bench = consistency_benchmark(&cfg).unwrap();
    let init = bench.initial_policy(&cfg).unwrap();
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    for (name, schedule) in [
        ("sft_epoch", StageSchedule { sft: 1, dpo: 0, grpo: 0 }),
        ("dpo_epoch", StageSchedule { sft: 0, dpo: 1, grpo: 0 }),
        ("grpo_epoch", StageSchedule { sft: 0, dpo: 0, grpo: 1 }),
    ] {
        let tc = TrainConfig {
            schedule,
            ..TrainConfig::default()
        };
        g.bench_function(name, |b| {
            b.iter_batched(|| init.clone(), |p| train_curriculum(&p, &bench.data, &tc, None).unwrap(), BatchSize::LargeInput)
        });
    }
    g.finish();
}

criterion_group!(benches, rewards, advantages, clustering, training);
criterion_main!(benches);
