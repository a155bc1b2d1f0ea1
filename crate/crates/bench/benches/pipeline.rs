use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use splmut::feature_model::enumerate_configurations;
use splmut::interp::DEFAULT_STEP_BUDGET;
use splmut::mutation_ops::generate;
use splmut::pipeline::{self, RunConfig};
use splmut::testing::{generate_plc, Alphabet};
use splmut::{fixtures, Operator};

fn bench_variants(c: &mut Criterion) {
    let mut g = c.benchmark_group("enumerate");
    for b in fixtures::all() {
        g.bench_with_input(BenchmarkId::from_parameter(&b.name), &b, |x, b| {
            x.iter(|| enumerate_configurations(black_box(&b.spec.feature_model), 100_000).unwrap())
        });
    }
    g.finish();
}

fn bench_mutants(c: &mut Criterion) {
    let mut g = c.benchmark_group("generate_mutants");
    for b in fixtures::all() {
        g.bench_with_input(BenchmarkId::from_parameter(&b.name), &b, |x, b| {
            x.iter(|| Operator::ALL.iter().map(|op| generate(*op, &b.spec).map_or(0, |v| v.len())).sum::<usize>())
        });
    }
    g.finish();
}

fn bench_plc(c: &mut Criterion) {
    let mut g = c.benchmark_group("generate_plc");
    for b in fixtures::all() {
        let alphabet = Alphabet::for_spec(&b.spec, &b.testgen.payloads);
        g.bench_with_input(BenchmarkId::from_parameter(&b.name), &b, |x, b| {
            x.iter(|| generate_plc(&b.spec, &alphabet, 40, DEFAULT_STEP_BUDGET))
        });
    }
    g.finish();
}

fn bench_pipeline(c: &mut Criterion) {
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(20);
    for b in fixtures::all() {
        let alphabet = Alphabet::for_spec(&b.spec, &b.testgen.payloads);
        let tests = generate_plc(&b.spec, &alphabet, 40, DEFAULT_STEP_BUDGET).tests;
        for workers in [1, 4] {
            let rc = RunConfig { workers, ..Default::default() };
            g.bench_with_input(BenchmarkId::new(b.name.as_str(), workers), &rc, |x, rc| {
                x.iter(|| pipeline::run(&b.name, &b.spec, &tests, rc).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, bench_variants, bench_mutants, bench_plc, bench_pipeline);
criterion_main!(benches);
