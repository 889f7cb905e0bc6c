//! Parallel-vs-sequential throughput of the per-user hot loops.
//!
//! Reranking and drift profiling are data-parallel over users; these benches
//! pit the default rayon pool against a single-thread pool on the same
//! workload (or measure the plain sequential path when the `parallel` feature
//! is off). Outputs are bit-identical across pool sizes, so the only thing
//! that should differ here is walltime.
//!
//! Run with `cargo bench -p calrank-core`.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use calrank_core::backbone::{train, TrainingConfig, TrainResult};
use calrank_core::calibration::{drift_profile, CalibrationConfig};
use calrank_core::corpus::{generate_synthetic, leave_one_out_split, SplitDataset, SyntheticConfig};
use calrank_core::rerank::{rerank_all, CandidatePool, RerankConfig, ScheduleMode};

fn workload() -> (SplitDataset, TrainResult) {
    let data = generate_synthetic(&SyntheticConfig {
        users: 300,
        items: 200,
        categories: 8,
        mean_length: 40.0,
        drift_rate: 0.05,
        concentration: 0.5,
        seed: 4242,
    })
    .expect("synthetic config is valid");
    let split = leave_one_out_split(data);
    let trained = train(
        &split,
        &TrainingConfig { epochs: 2, dim: 16, ..Default::default() },
        &CalibrationConfig::default(),
    )
    .expect("training succeeds");
    (split, trained)
}

fn bench_rerank(c: &mut Criterion) {
    let (split, trained) = workload();
    let rcfg = RerankConfig {
        lambda: 0.7,
        k: 10,
        schedule: ScheduleMode::Prioritized,
        candidate_pool: CandidatePool::TopN(100),
        exclude_train_items: true,
    };
    let ccfg = CalibrationConfig::default();

    let mut group = c.benchmark_group("rerank_all");
    group.sample_size(10);

    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("single-thread pool");
        group.bench_function("sequential", |b| {
            b.iter(|| {
                single.install(|| {
                    black_box(rerank_all(&trained.params, &split, &rcfg, &ccfg).unwrap())
                })
            })
        });
        group.bench_function("parallel", |b| {
            b.iter(|| black_box(rerank_all(&trained.params, &split, &rcfg, &ccfg).unwrap()))
        });
    }

    #[cfg(not(feature = "parallel"))]
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(rerank_all(&trained.params, &split, &rcfg, &ccfg).unwrap()))
    });

    group.finish();
}

fn bench_drift(c: &mut Criterion) {
    let (split, _) = workload();
    let ccfg = CalibrationConfig::default();
    let intervals = [5usize, 10, 15, 20];

    let mut group = c.benchmark_group("drift_profile");
    group.sample_size(10);

    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("single-thread pool");
        group.bench_function("sequential", |b| {
            b.iter(|| {
                single.install(|| {
                    black_box(drift_profile(&split.train, 10, &intervals, &ccfg).unwrap())
                })
            })
        });
        group.bench_function("parallel", |b| {
            b.iter(|| black_box(drift_profile(&split.train, 10, &intervals, &ccfg).unwrap()))
        });
    }

    #[cfg(not(feature = "parallel"))]
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(drift_profile(&split.train, 10, &intervals, &ccfg).unwrap()))
    });

    group.finish();
}

criterion_group!(benches, bench_rerank, bench_drift);
criterion_main!(benches);
