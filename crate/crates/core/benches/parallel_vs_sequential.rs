//! Same Monte Carlo jobs under `Execution::Sequential` and `Execution::Parallel`.
//! Built without the `parallel` feature, both rows run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use regime_lab::{
    discrete_cf, jump_count_mgf_check, price_european_call, CfEstimator, CfSpec, DiscreteScheme, Execution, FamilyKind, GeneratorMatrix,
    MonteCarlo, RegimeParams, ReturnFamily, SeedSpec, StateConvention, TimeGrid, DEFAULT_TOL,
};

const TRIALS: u64 = 20_000;
const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn fixture() -> (GeneratorMatrix, RegimeParams) {
    let g = GeneratorMatrix::symmetric(2, 1.0).unwrap();
    let params = RegimeParams::new(vec![0.0, 0.05], vec![0.1, 0.3], 100.0).unwrap();
    (g, params)
}

fn mc(execution: Execution) -> MonteCarlo {
    MonteCarlo::new(TRIALS, SeedSpec::new(1)).with_execution(execution)
}

fn bench_ctmc(c: &mut Criterion) {
    let (g, params) = fixture();
    let mut group = c.benchmark_group("ctmc");
    group.throughput(Throughput::Elements(TRIALS));
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new("mgf", name), |b| b.iter(|| jump_count_mgf_check(&g, 1.0, &[0.5, 1.0], &mc(exec)).unwrap()));
        group.bench_function(BenchmarkId::new("limit_price", name), |b| {
            b.iter(|| price_european_call(&g, &params, 100.0, 1.0, &mc(exec)).unwrap())
        });
    }
    group.finish();
}

fn bench_discrete_cf(c: &mut Criterion) {
    let (g, params) = fixture();
    let spec = CfSpec::new(vec![1.0, -1.0], vec![0.5, 1.0]).unwrap();
    let mut group = c.benchmark_group("discrete_cf");
    group.throughput(Throughput::Elements(TRIALS));
    group.sample_size(20);
    for n in [64u64, 1024] {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let family = ReturnFamily::new(FamilyKind::Binomial, &params, &grid).unwrap();
        let scheme = DiscreteScheme::new(&g, family, StateConvention::EndOfStep, DEFAULT_TOL).unwrap();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &scheme, |b, s| {
                b.iter(|| discrete_cf(s, &spec, &mc(exec), CfEstimator::Sampled).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_ctmc, bench_discrete_cf);
criterion_main!(benches);
