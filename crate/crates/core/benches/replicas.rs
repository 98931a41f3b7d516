//! Sequential vs rayon executor on the same ParRep runs.

use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use parrep::harness::Experiment;
use parrep::parse::Horizon;
use parrep::Executor;

fn experiment(name: &str, replicas: usize, t_end: f64) -> Experiment {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
    let mut exp = Experiment::load(&path).expect("fixture config loads");
    exp.config.replicas = replicas;
    exp.config.horizon = Horizon::Time(t_end);
    exp
}

fn executors() -> Vec<(&'static str, Executor)> {
    vec![
        ("sequential", Executor::sequential()),
        ("parallel", Executor::new(0).expect("thread pool")),
    ]
}

fn bench_engines(c: &mut Criterion) {
    let mut group = c.benchmark_group("cascade");
    group.sample_size(10);
    for cfg in ["cascade_embedded.cfg", "cascade_ctmc.cfg"] {
        for r in [10, 100] {
            let exp = experiment(cfg, r, 50.0);
            for (name, exec) in executors() {
                let id = BenchmarkId::new(format!("{}/{name}", exp.config.algorithm.name()), r);
                group.bench_function(id, |b| b.iter(|| black_box(exp.run(&exec).unwrap())));
            }
        }
    }
    group.finish();
}

fn bench_dephasing(c: &mut Criterion) {
    let mut group = c.benchmark_group("trimer");
    group.sample_size(10);
    for cfg in ["trimer_rej_60.cfg", "trimer_fv_60.cfg"] {
        let exp = experiment(cfg, 100, 5.0);
        for (name, exec) in executors() {
            let id = BenchmarkId::new(format!("{}/{name}", exp.config.dephasing.name()), 100);
            group.bench_function(id, |b| b.iter(|| black_box(exp.run(&exec).unwrap())));
        }
    }
    group.finish();
}

criterion_group!(benches, bench_engines, bench_dephasing);
criterion_main!(benches);
