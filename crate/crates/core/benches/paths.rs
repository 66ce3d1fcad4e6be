use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spde_msd::exec::Execution;
use spde_msd::experiments::{run_msd, InitialPair, RunOptions};
use spde_msd::grid::build_grid;
use spde_msd::integrators::{Scheme, SchemeConfig};
use spde_msd::problems::{make_ginzburg_landau, NoiseKind};

fn msd_paths(c: &mut Criterion) {
    let grid = build_grid(0.0, 1.0, 32).unwrap();
    let problem = make_ginzburg_landau(&grid, NoiseKind::MultiplicativeLinear).unwrap();
    let ic = InitialPair::default();
    let u0 = ic.u0.sample(&problem).unwrap();
    let y0 = ic.y0.sample(&problem).unwrap();
    let mut group = c.benchmark_group("msd_paths");
    group.sample_size(10);
    for scheme in [Scheme::ThetaMaruyama, Scheme::ThetaImex] {
        let cfg = SchemeConfig::over(1.0, 1.0, 200, scheme).unwrap();
        for (name, execution) in [
            ("sequential", Execution::Sequential),
            ("parallel", Execution::Parallel),
        ] {
            let opts = RunOptions {
                execution,
                ..Default::default()
            };
            group.bench_with_input(
                BenchmarkId::new(format!("{scheme:?}"), name),
                &opts,
                |b, o| b.iter(|| run_msd(&problem, &cfg, &u0, &y0, 64, o).unwrap()),
            );
        }
    }
    group.finish();
}

criterion_group!(benches, msd_paths);
criterion_main!(benches);
