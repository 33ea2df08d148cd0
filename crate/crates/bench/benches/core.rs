use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use webagg_bench::{action_turn, series, world};
use webagg_core::agent::parse_model_action;
use webagg_core::aggregation::{evaluate, ses_best_alpha, Env, SesGrid};
use webagg_core::web::{Blacklist, Toolset, WebBackend};

fn expressions(c: &mut Criterion) {
    let env = Env::new();
    let mut g = c.benchmark_group("compute");
    for (name, expr) in [
        ("arith", "round((64300 - 58900) / 58900 * 100, 1)"),
        ("stats", "std_p([412, 436, 468, 495, 530, 561, 590, 604])"),
        ("dates", "date_diff(\"2019-03-01\", \"2024-11-29\", \"days\")"),
    ] {
        g.bench_with_input(BenchmarkId::from_parameter(name), &expr, |b, e| {
            b.iter(|| evaluate(black_box(e), &env).unwrap())
        });
    }
    g.finish();
}

fn smoothing(c: &mut Criterion) {
    let grid = SesGrid::default();
    let mut g = c.benchmark_group("ses_best_alpha");
    for n in [12, 48] {
        let xs = series(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &xs, |b, xs| {
            b.iter(|| ses_best_alpha(black_box(xs), &grid).unwrap())
        });
    }
    g.finish();
}

fn search(c: &mut Criterion) {
    let w = world(2_000);
    let bl = Blacklist::new(["site3"]);
    c.bench_function("fixture_search_2000", |b| {
        b.iter(|| w.search(black_box("harbor revenue census"), 10, &bl).unwrap())
    });
}

fn parsing(c: &mut Criterion) {
    let tools = Toolset::full();
    let turn = action_turn(8);
    c.bench_function("parse_action_8_calls", |b| b.iter(|| parse_model_action(black_box(&turn), &tools)));
}

criterion_group!(benches, expressions, smoothing, search, parsing);
criterion_main!(benches);
