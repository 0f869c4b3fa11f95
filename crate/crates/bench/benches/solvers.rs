use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tou_core::data::{
    build_population, ingest_reader, sample_type_groupings, spread_thetas, write_synthetic_csv,
    NetLoadOptions, SyntheticConfig,
};
use tou_core::{
    build_contract, simulate_scenarios, solve_escm_c, solve_scm, Catalog, Population, SystemParams,
    Timing,
};

fn params() -> SystemParams {
    SystemParams::new(1.0, 20.0, 1.0, 7, 17).unwrap()
}

fn population(users: usize, days: usize) -> Population {
    let mut buf = Vec::new();
    let config = SyntheticConfig {
        users,
        days,
        ..Default::default()
    };
    write_synthetic_csv(&config, &mut buf).unwrap();
    let data = ingest_reader(buf.as_slice(), "bench").unwrap();
    let options = NetLoadOptions {
        solar_scale: 2.0,
        demand_scale: 1000.0,
        ..Default::default()
    };
    build_population(&data, &options).unwrap()
}

fn bench_scm(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_scm");
    for k in [4usize, 16, 64, 256] {
        let thetas: Vec<f64> = (0..k).map(|i| 2.0 + i as f64).collect();
        let demands: Vec<(f64, f64)> = (0..k)
            .map(|i| (50.0 + (i % 7) as f64, 20.0 + (i % 5) as f64))
            .collect();
        let catalog = Catalog::from_parts(&thetas, &demands).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(k), &catalog, |b, catalog| {
            b.iter(|| solve_scm(black_box(catalog), &params()).unwrap())
        });
    }
    group.finish();
}

fn bench_escm_c(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_escm_c");
    for days in [30usize, 120, 361] {
        let pop = population(40, days);
        let grouping = sample_type_groupings(40, 4, 1, 1).unwrap().remove(0);
        let scenarios = pop.type_scenarios(&grouping, 4).unwrap();
        let thetas = spread_thetas(30.0, 1.0 / 3.0, 4).unwrap();
        let catalog = Catalog::from_parts(&thetas, &scenarios.mean_demands()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(days), &days, |b, _| {
            b.iter(|| solve_escm_c(black_box(&scenarios), &catalog, &params()).unwrap())
        });
    }
    group.finish();
}

fn bench_contract_and_market(c: &mut Criterion) {
    let pop = population(40, 30);
    let grouping = sample_type_groupings(40, 4, 1, 1).unwrap().remove(0);
    let scenarios = pop.type_scenarios(&grouping, 4).unwrap();
    let thetas = spread_thetas(30.0, 1.0 / 3.0, 4).unwrap();
    let catalog = Catalog::from_parts(&thetas, &scenarios.mean_demands()).unwrap();
    let users = pop.users(&grouping, &thetas).unwrap();
    let plan = solve_escm_c(&scenarios, &catalog, &params()).unwrap();

    c.bench_function("build_contract/40users", |b| {
        b.iter(|| build_contract(black_box(&plan.classification), &catalog, &users, 500.0).unwrap())
    });
    let contract = build_contract(&plan.classification, &catalog, &users, 500.0).unwrap();
    c.bench_function("simulate_scenarios/40users_30days", |b| {
        b.iter(|| {
            simulate_scenarios(
                black_box(&contract),
                &users,
                &pop,
                &params(),
                Timing::PerScenario,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, bench_scm, bench_escm_c, bench_contract_and_market);
criterion_main!(benches);
