//! Compare the rayon-backed evaluation path against the sequential
//! reference on the main data-parallel workloads.
//!
//! Run with `cargo bench -p vtt-core`. Building with
//! `--no-default-features` makes both paths sequential.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use vtt_core::data::{generate_dataset, DatasetConfig};
use vtt_core::environment::{run_episode, EpisodeConfig};
use vtt_core::eval::reward_table;
use vtt_core::exec;
use vtt_core::grading::{AssumptionMode, GroundTruthImage};
use vtt_core::responders::{ResponderSpec, SyntheticResponder};
use vtt_core::rng;
use vtt_core::strategies::{RandomQs, TextbookQs};

fn dataset() -> Vec<GroundTruthImage> {
    generate_dataset(&DatasetConfig { n_images: 200, seed: 7, ..DatasetConfig::default() }).unwrap()
}

fn env_cfg() -> EpisodeConfig {
    EpisodeConfig { gamma: 0.8, max_questions: 20, mode: AssumptionMode::ExtraUA, include_terminal_tuples: false }
}

fn bench_episode_batch(c: &mut Criterion) {
    let images = dataset();
    let cfg = env_cfg();
    let responder = SyntheticResponder::new(
        ResponderSpec::Reasonable { accuracy: 0.7, seed: 3 },
        AssumptionMode::ExtraUA,
    )
    .unwrap();
    let strategy = RandomQs;

    let mut group = c.benchmark_group("episode_batch");
    group.bench_with_input(BenchmarkId::new("parallel", images.len()), &images, |b, images| {
        b.iter(|| {
            exec::map_indexed(images, |i, img| {
                run_episode(&strategy, &responder, img, &cfg, rng::mix(&[11, i as u64])).unwrap().return_g
            })
        })
    });
    group.bench_with_input(BenchmarkId::new("sequential", images.len()), &images, |b, images| {
        b.iter(|| {
            exec::map_indexed_sequential(images, |i, img| {
                run_episode(&strategy, &responder, img, &cfg, rng::mix(&[11, i as u64])).unwrap().return_g
            })
        })
    });
    group.finish();
}

fn bench_reward_table(c: &mut Criterion) {
    let images = dataset();
    let cfg = env_cfg();
    let responder = SyntheticResponder::groundtruth();
    let strategy = TextbookQs { mode: AssumptionMode::ExtraUA };

    c.bench_function("reward_table_textbook", |b| {
        b.iter(|| reward_table(&strategy, &responder, &images, &cfg, 5).unwrap())
    });
}

criterion_group!(benches, bench_episode_batch, bench_reward_table);
criterion_main!(benches);
