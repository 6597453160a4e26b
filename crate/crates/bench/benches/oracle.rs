use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use orderprobe::{build_ordered, enumerate_to_coverage, erase_order, sentence_probability};
use orderprobe_bench::fixtures;

fn enumerate(c: &mut Criterion) {
    let mut group = c.benchmark_group("enumerate");
    for (name, g) in fixtures() {
        for threshold in [0.75, 0.95] {
            group.bench_with_input(BenchmarkId::new(name, threshold), &threshold, |b, &t| {
                b.iter(|| enumerate_to_coverage(&g, t, 64).unwrap())
            });
        }
    }
    group.finish();
}

fn inside(c: &mut Criterion) {
    let mut group = c.benchmark_group("inside");
    for (name, g) in fixtures() {
        let table = enumerate_to_coverage(&g, 0.95, 64).unwrap();
        group.bench_function(name, |b| {
            b.iter(|| {
                table
                    .sentences()
                    .iter()
                    .map(|s| sentence_probability(&g, &s.tokens))
                    .sum::<f64>()
            })
        });
    }
    group.finish();
}

fn tables(c: &mut Criterion) {
    let mut group = c.benchmark_group("tables");
    for (name, g) in fixtures() {
        let table = enumerate_to_coverage(&g, 0.95, 64).unwrap();
        let max_k = table.max_length().min(3);
        for k in 1..=max_k {
            group.bench_with_input(BenchmarkId::new(name, k), &k, |b, &k| {
                b.iter(|| erase_order(&build_ordered(&table, k).unwrap()))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, enumerate, inside, tables);
criterion_main!(benches);
