//! One worker against the full pool on the hot data-parallel stages.
//! Built without the `parallel` feature, only the sequential variant runs.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use forge_core::evalstats::bootstrap_median_ci;
use forge_core::floorplan::prepare;
use forge_core::mapops::{find_frontiers, ClusterParams};
use forge_core::pipeline::{run_synth, NamedPlan, PipelineConfig, SampleRecord};
use forge_core::infogain::{estimate_all, Environments};
use forge_core::synthetic::{generate_plan, SyntheticConfig};

fn plans() -> Vec<NamedPlan> {
    (0..4)
        .map(|i| NamedPlan {
            id: format!("bench_{i}"),
            plan: prepare(&generate_plan(100 + i, &SyntheticConfig::default())),
        })
        .collect()
}

fn config() -> PipelineConfig {
    PipelineConfig {
        waypoints: 4,
        max_paths: Some(1),
        ..PipelineConfig::default()
    }
}

/// Runs `f` on a pool of `threads` workers, or inline when sequential.
fn on_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("pool");
        return pool.install(f);
    }
    let _ = threads;
    f()
}

fn variants() -> Vec<(&'static str, Option<usize>)> {
    if cfg!(feature = "parallel") {
        let all = std::thread::available_parallelism().map_or(1, |n| n.get());
        vec![("1-thread", Some(1)), ("pool", Some(all))]
    } else {
        vec![("sequential", None)]
    }
}

fn frontier_gains(records: &[SampleRecord], range: f64) -> usize {
    records
        .iter()
        .map(|r| {
            let grid = r.occupancy().expect("grid");
            let visible = r.visible();
            let env = Environments {
                visible: &visible,
                predicted: None,
                truth: None,
            };
            let fr = find_frontiers(&grid, &ClusterParams::default());
            estimate_all(&grid, &fr, &env, range).expect("gains").len()
        })
        .sum()
}

fn bench(c: &mut Criterion) {
    let plans = plans();
    let cfg = config();
    let (records, _) = run_synth(&plans, &cfg);
    let sample: Vec<SampleRecord> = records.iter().step_by(4).cloned().collect();
    let values: Vec<f64> = (0..2000).map(|i| ((i * 7919) % 1000) as f64).collect();

    let mut g = c.benchmark_group("synth");
    g.sample_size(10);
    for (name, threads) in variants() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| on_pool(threads, || black_box(run_synth(&plans, &cfg).0.len())))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("frontier_gains");
    g.sample_size(10);
    for (name, threads) in variants() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| on_pool(threads, || black_box(frontier_gains(&sample, cfg.range))))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("bootstrap");
    for (name, threads) in variants() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| on_pool(threads, || black_box(bootstrap_median_ci(&values, 1000, 7, 0.95))))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
