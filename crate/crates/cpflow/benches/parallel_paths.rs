use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cpflow::series::compute_series;
use cpflow::sim::{monte_carlo, EvalMode, ModelConfig, SimConfig, Target};
use cpflow::{Execution, Scenario, Setting};

const PATHS: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn series(c: &mut Criterion) {
    let mut g = c.benchmark_group("series");
    g.sample_size(10);
    for (nu, sc, smax) in [(2, Scenario::Asym, 4), (3, Scenario::Asym, 3), (4, Scenario::Sym, 3)] {
        let st = Setting::new(nu, sc).unwrap();
        for (name, exec) in PATHS {
            g.bench_with_input(BenchmarkId::new(name, format!("nu{nu}-{sc}-s{smax}")), &st, |b, &st| {
                b.iter(|| compute_series(st, smax, false, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    for (mode, p, h) in [(EvalMode::Gram, 64, 64), (EvalMode::Dense, 16, 32)] {
        let model = ModelConfig {
            nu: 3,
            scenario: Scenario::Asym,
            p,
            h,
            sigma: 0.2,
            t_scale: 1.0,
            target: Target::Identity,
            mode,
        };
        let mut cfg = SimConfig::new(model, 1.0, 50, 8);
        cfg.probe_stride = 10;
        for (name, exec) in PATHS {
            g.bench_with_input(BenchmarkId::new(name, format!("{mode:?}-p{p}-H{h}")), &cfg, |b, cfg| {
                b.iter(|| monte_carlo(cfg, exec).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, series, simulation);
criterion_main!(benches);
