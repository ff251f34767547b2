use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use typeforge::search::Objective;
use typeforge::{
    evaluate_rules, run_search, simplify, DesignSettings, DesignWorld, MembershipCache, Method, ObjectiveConfig,
    OracleObjective, SearchConfig, SimplifyConfig,
};
use typeforge_bench::{mentions, pool, world};

fn objective(c: &mut Criterion) {
    let w = world(0, 200);
    let ms = mentions(&w);
    let cache = MembershipCache::new();
    let pool = pool(&w, 64, &cache);
    let subset: Vec<usize> = (0..pool.len().min(10)).collect();
    c.bench_function("score 10 axes, fresh memo", |b| {
        b.iter_batched(
            || OracleObjective::new(&pool, &ms, ObjectiveConfig::default()),
            |obj| obj.score(&subset),
            BatchSize::SmallInput,
        )
    });
    c.bench_function("greedy search", |b| {
        b.iter(|| {
            let obj = OracleObjective::new(&pool, &ms, ObjectiveConfig::default());
            run_search(&obj, &SearchConfig::method(Method::Greedy)).unwrap()
        })
    });
}

fn design(c: &mut Criterion) {
    let w = world(1, 200);
    let system = w.latent.clone();
    let dw = DesignWorld::new(w.graph, w.stats, w.corpus, 200);
    let settings = DesignSettings::default();
    c.bench_function("evaluate rules", |b| b.iter(|| evaluate_rules(&dw, &system, &settings).unwrap()));
}

fn simplification(c: &mut Criterion) {
    let w = world(2, 200);
    let cfg = SimplifyConfig::default();
    c.bench_function("simplify links", |b| b.iter(|| simplify(&w.stats, &w.graph, &cfg)));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = objective, design, simplification
}
criterion_main!(benches);
