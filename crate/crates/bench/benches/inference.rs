use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svbop_core::hnsw::{HnswIndex, HnswParams};
use svbop_core::tree::{random_binary_tree, NodeProbs};
use svbop_core::{
    brute_force_bayes, FullProvider, HfProvider, HsgProvider, LinearModel, SparseVector, Svbop,
    UtilitySpec,
};

fn model(k: usize, d: usize, seed: u64) -> (LinearModel, Vec<SparseVector>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = (0..k * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let model = LinearModel::new(k, d, weights, None).unwrap();
    let queries = (0..64)
        .map(|_| {
            SparseVector::from_dense(
                &(0..d)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    (model, queries)
}

fn providers(c: &mut Criterion) {
    let utility = UtilitySpec::f1();
    let d = 32;
    let mut group = c.benchmark_group("svbop");
    for k in [100, 1000, 5000] {
        let (model, queries) = model(k, d, 1);
        let svbop = Svbop::new(&utility, k, false).unwrap();
        let index = HnswIndex::from_model(&model, HnswParams::default()).unwrap();
        group.bench_with_input(BenchmarkId::new("full", k), &k, |b, _| {
            let mut i = 0;
            b.iter(|| {
                i = (i + 1) % queries.len();
                svbop
                    .predict(&mut FullProvider::new(&model, &queries[i], true).unwrap())
                    .unwrap()
            })
        });
        group.bench_with_input(BenchmarkId::new("hsg", k), &k, |b, _| {
            let mut i = 0;
            b.iter(|| {
                i = (i + 1) % queries.len();
                svbop
                    .predict(&mut HsgProvider::new(&index, &queries[i], 10, None).unwrap())
                    .unwrap()
            })
        });

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powi(8)).collect();
        let total: f64 = raw.iter().sum();
        let dist =
            svbop_core::ClassDist::from_probs(&raw.iter().map(|r| r / total).collect::<Vec<_>>())
                .unwrap();
        let tree = random_binary_tree(k, 3).unwrap();
        let probs = NodeProbs::induced(&tree, &dist).unwrap();
        let x = SparseVector::default();
        group.bench_with_input(BenchmarkId::new("hf", k), &k, |b, _| {
            b.iter(|| {
                svbop
                    .predict(&mut HfProvider::new(&tree, &probs, &x).unwrap())
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn exhaustive(c: &mut Criterion) {
    let utility = UtilitySpec::f1();
    let mut group = c.benchmark_group("brute_force");
    for k in [8, 12, 16] {
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let dist =
            svbop_core::ClassDist::from_probs(&raw.iter().map(|r| r / total).collect::<Vec<_>>())
                .unwrap();
        let svbop = Svbop::new(&utility, k, false).unwrap();
        group.bench_with_input(BenchmarkId::new("oracle", k), &k, |b, _| {
            b.iter(|| brute_force_bayes(&dist, &utility).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("svbop", k), &k, |b, _| {
            b.iter(|| svbop.predict(&mut FullProvider::from_dist(&dist)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, providers, exhaustive);
criterion_main!(benches);
