use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cstree::learner::optimal_stagings;
use cstree::model_ops::{RandomTheta, DEFAULT_KL_CAP};
use cstree::scoring::{build_score_tables, ScoreConfig};
use cstree::suffstats::CountTable;
use cstree::{kl_divergence, random_cstree, sample, Dataset, Execution, Order, PossibleParents, StateSpace};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn workload(p: usize, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(p as u64);
    let tree = random_cstree(&StateSpace::binary(p).unwrap(), 2, &mut rng, RandomTheta::Dirichlet1).unwrap();
    sample(&tree, n, &mut rng).unwrap()
}

fn bench_tables(c: &mut Criterion) {
    let mut group = c.benchmark_group("score_tables");
    group.sample_size(10);
    for p in [8, 12] {
        let data = workload(p, 2000);
        let pp = PossibleParents::full(p);
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, p), &p, |b, _| {
                b.iter(|| build_score_tables(&data, &pp, ScoreConfig::default(), exec).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_counts(c: &mut Criterion) {
    let mut group = c.benchmark_group("count_table");
    let data = workload(16, 5000);
    let pp = PossibleParents::full(16);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| CountTable::build(&data, &pp, 2, exec).unwrap()));
    }
    group.finish();
}

fn bench_stagings(c: &mut Criterion) {
    let mut group = c.benchmark_group("optimal_stagings");
    let data = workload(12, 2000);
    let tables =
        build_score_tables(&data, &PossibleParents::full(12), ScoreConfig::default(), Execution::Parallel).unwrap();
    let order = Order::identity(12);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| optimal_stagings(&tables, &order, exec)));
    }
    group.finish();
}

fn bench_kl(c: &mut Criterion) {
    let mut group = c.benchmark_group("kl_divergence");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let space = StateSpace::binary(16).unwrap();
    let p = random_cstree(&space, 2, &mut rng, RandomTheta::Dirichlet1).unwrap();
    let q = random_cstree(&space, 2, &mut rng, RandomTheta::Dirichlet1).unwrap();
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| kl_divergence(&p, &q, DEFAULT_KL_CAP, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_tables, bench_counts, bench_stagings, bench_kl);
criterion_main!(benches);
