use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use factum_core::dbb::{
    extended_born_check, simulate_exp, BornCheckConfig, ExpConfig, PlaneWave, PlaneWaveSum,
    TwoWaveState,
};
use factum_core::genesis::{run_successions, GenerationOp};
use factum_core::hilbert::{born_law, c, evolve, random, HamiltonianSpec};
use factum_core::reconstruct::retrieve_phases_from_probabilities;
use factum_core::{LawParams, ObservableSpec, RetrievalConfig, TransformMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn successions(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("run_successions");
    for dim in [2usize, 8] {
        let g = GenerationOp::simple("g", random::state(dim, &mut rng))
            .prepare()
            .unwrap();
        let obs = random::observable("A", dim, &mut rng);
        let n = 100_000;
        group.throughput(Throughput::Elements(n));
        group.bench_function(format!("dim{dim}"), |b| {
            b.iter(|| run_successions(&g, &obs, n, LawParams::default(), black_box(3)).unwrap())
        });
    }
    group.finish();
}

fn stability(crit: &mut Criterion) {
    let g = GenerationOp::simple(
        "coin",
        factum_core::OracleState::normalized(vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap(),
    )
    .prepare()
    .unwrap();
    let obs = ObservableSpec::standard("A", 2).unwrap();
    let law = run_successions(&g, &obs, 1_000_000, LawParams::default(), 5).unwrap();
    crit.bench_function("check_convergence/100_blocks", |b| {
        b.iter(|| black_box(&law).check_convergence().unwrap())
    });
}

fn oracle(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let psi = random::state(16, &mut rng);
    let obs = random::observable("A", 16, &mut rng);
    let h = HamiltonianSpec::new(random::hermitian(16, &mut rng), 1.0).unwrap();
    c.bench_function("born_law/dim16", |b| {
        b.iter(|| born_law(black_box(&psi), &obs).unwrap())
    });
    c.bench_function("evolve/dim16", |b| {
        b.iter(|| evolve(black_box(&psi), &h, 0.7).unwrap())
    });
}

fn retrieval(c: &mut Criterion) {
    let mut group = c.benchmark_group("retrieve_phases");
    for dim in [2usize, 4] {
        let mut rng = ChaCha8Rng::seed_from_u64(10 + dim as u64);
        let psi = random::state(dim, &mut rng);
        let a = ObservableSpec::standard("A", dim).unwrap();
        let partners: Vec<ObservableSpec> = ["B", "C"]
            .iter()
            .map(|n| random::observable(n, dim, &mut rng))
            .collect();
        let taus: Vec<TransformMatrix> = partners
            .iter()
            .map(|p| TransformMatrix::between(&a, p).unwrap())
            .collect();
        let pa = born_law(&psi, &a).unwrap();
        let laws: Vec<Vec<f64>> = partners
            .iter()
            .map(|p| born_law(&psi, p).unwrap())
            .collect();
        group.bench_function(format!("exact/dim{dim}"), |b| {
            b.iter_batched(
                || {
                    laws.iter()
                        .map(Vec::as_slice)
                        .zip(&taus)
                        .collect::<Vec<_>>()
                },
                |pairs| {
                    retrieve_phases_from_probabilities(&pa, &pairs, &RetrievalConfig::default())
                        .unwrap()
                },
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn guidance(crit: &mut Criterion) {
    let s = TwoWaveState::electron_default();
    let cfg = ExpConfig {
        n_trials: 10_000,
        lambda_factors: vec![1.0, 2.0],
        ..Default::default()
    };
    let mut group = crit.benchmark_group("guidance");
    group.sample_size(20);
    group.bench_function("simulate_exp/1e4", |b| {
        b.iter(|| simulate_exp(&s, &cfg, black_box(7)).unwrap())
    });
    let w = PlaneWaveSum::new(
        vec![
            PlaneWave {
                weight: c(1.0, 0.0),
                momentum: [1.0, 0.0, -2.0],
            },
            PlaneWave {
                weight: c(0.0, 0.5),
                momentum: [1.0, 0.0, 2.0],
            },
        ],
        std::f64::consts::PI,
        1.0,
    )
    .unwrap();
    let born = BornCheckConfig {
        n_samples: 10_000,
        bin_width: Some(1e-3),
    };
    group.bench_function("extended_born_check/1e4", |b| {
        b.iter(|| extended_born_check(&w, &born, black_box(9)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, successions, stability, oracle, retrieval, guidance);
criterion_main!(benches);
