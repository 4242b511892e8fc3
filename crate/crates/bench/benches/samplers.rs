use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mdabc::abc::{rejection_abc, smc_abc, AbcProblem, Tolerance};
use mdabc::distances::DistanceOptions;
use mdabc::{DistanceKind, ModelKind, ModelSpec, RngStream, SmcConfig, StreamAddress};
use mdabc_bench::{mixture_sample, MIXTURE_THETA};
use std::hint::black_box;

fn simulators(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    for (kind, theta) in [
        (ModelKind::Mixture, MIXTURE_THETA.to_vec()),
        (ModelKind::Gk, vec![3.0, 1.0, 2.0, 0.5]),
        (ModelKind::Mg1, vec![4.0, 7.0, 0.15]),
        (ModelKind::Sv, vec![-0.736, 0.9, 0.363]),
    ] {
        let sim = ModelSpec::new(kind, 500, 500).with_burn_in(500).simulator(500);
        let mut rng = RngStream::from_seed(1);
        group.bench_function(BenchmarkId::new(kind.name(), 500), |b| {
            b.iter(|| sim.simulate(black_box(&theta), &mut rng).unwrap())
        });
    }
    group.finish();
}

fn samplers(c: &mut Criterion) {
    let spec = ModelSpec::new(ModelKind::Mixture, 100, 100);
    let y = mixture_sample(100, 7);
    let mut group = c.benchmark_group("sampler");
    group.sample_size(10);
    for (name, kind, m) in [
        ("cvm", DistanceKind::Cvm, 100),
        ("hellinger", DistanceKind::Hellinger, 200),
    ] {
        let problem = AbcProblem::new(&spec, kind, m, y.clone(), DistanceOptions::default()).unwrap();
        group.bench_function(BenchmarkId::new("rejection_4096", name), |b| {
            b.iter(|| rejection_abc(&problem, Tolerance::AcceptFraction(0.05), 4096, StreamAddress::new(1, 0, 0, 0)).unwrap())
        });
        let cfg = SmcConfig {
            n_particles: 256,
            sim_budget: 8192,
            ..SmcConfig::default()
        };
        group.bench_function(BenchmarkId::new("smc_8192", name), |b| {
            b.iter(|| smc_abc(&problem, &cfg, StreamAddress::new(1, 0, 0, 0)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, simulators, samplers);
criterion_main!(benches);
