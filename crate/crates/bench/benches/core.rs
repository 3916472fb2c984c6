use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use filmvalues::gateway::{stage, ChatMessage, ChatRequest};
use filmvalues::screenplay::parse_screenplay;
use filmvalues::stats::{aggregate_cells, mann_whitney_u, welch_t, Observation, Sample, Source};
use filmvalues::{Decade, Gender, ItemId, MockProvider};

fn fixture_script() -> String {
    let path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/corpus/script_01.txt");
    std::fs::read_to_string(path).unwrap()
}

fn parser(c: &mut Criterion) {
    let script = fixture_script();
    let long = script.repeat(200);
    let mut group = c.benchmark_group("parse_screenplay");
    group.bench_function("fixture", |b| {
        b.iter(|| parse_screenplay(black_box(&script), "f").unwrap())
    });
    group.bench_function("fixture_x200", |b| {
        b.iter(|| parse_screenplay(black_box(&long), "f").unwrap())
    });
    group.finish();
}

fn values(n: usize, offset: u64) -> Vec<f64> {
    (0..n as u64)
        .map(|i| ((i * 7 + offset) % 5 + 1) as f64)
        .collect()
}

fn tests(c: &mut Criterion) {
    let mut group = c.benchmark_group("two_sample");
    for n in [100, 1_000, 10_000] {
        let a = Sample::new("a", values(n, 0));
        let b = Sample::new("b", values(n, 3));
        group.bench_with_input(BenchmarkId::new("welch_t", n), &n, |bench, _| {
            bench.iter(|| welch_t(black_box(&a), black_box(&b)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("mann_whitney_u", n), &n, |bench, _| {
            bench.iter(|| mann_whitney_u(black_box(&a), black_box(&b)).unwrap())
        });
    }
    group.finish();
}

fn cells(c: &mut Criterion) {
    let obs: Vec<Observation> = (0..30_000u32)
        .map(|i| Observation {
            item_id: ItemId::ALL[i as usize % 3],
            decade: Decade::ALL[(i as usize / 3) % 3],
            gender: if i % 2 == 0 { Gender::F } else { Gender::M },
            response: (i % 5 + 1) as u8,
        })
        .collect();
    c.bench_function("aggregate_cells_30k", |b| {
        b.iter(|| aggregate_cells(black_box(&obs), Source::Simulated))
    });
}

fn mock(c: &mut Criterion) {
    use filmvalues::ChatProvider;
    let provider = MockProvider::new(7, Vec::new());
    let request = ChatRequest {
        model_name: "mock-model".into(),
        messages: vec![ChatMessage::user(
            "Q1 (job_priority): x\nQ2 (political_leaders): y\nQ3 (university_education): z",
        )],
        temperature: 0.0,
        request_tag: format!("{}:bench", stage::SURVEY),
    };
    c.bench_function("mock_survey_reply", |b| {
        b.iter(|| provider.send(black_box(&request)).unwrap())
    });
}

criterion_group!(benches, parser, tests, cells, mock);
criterion_main!(benches);
