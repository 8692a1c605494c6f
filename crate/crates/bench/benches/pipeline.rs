use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qnet_core::graph::GraphState;
use qnet_core::merging::{cluster_then_merge, merge_requests, ResourceState};
use qnet_core::request::{gen_uniform, RequestSet};
use qnet_core::spectral::{build_hierarchy, SpectralOrder};
use qnet_core::tableau::{Basis, StabilizerTableau};
use qnet_core::verification::verify_recipe;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform_set(n: usize) -> RequestSet {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    gen_uniform(n, 2 * n, &mut rng)
}

fn bench_generate(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate_uniform");
    for n in [8usize, 24, 48] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            b.iter(|| gen_uniform(n, 2 * n, &mut rng));
        });
    }
    group.finish();
}

fn bench_merge(c: &mut Criterion) {
    let mut group = c.benchmark_group("merge_requests");
    for n in [8usize, 24, 48] {
        let rs = uniform_set(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &rs, |b, rs| {
            b.iter(|| merge_requests(rs));
        });
    }
    group.finish();
}

fn bench_spectral(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral");
    for n in [16usize, 32] {
        let rs = uniform_set(n);
        group.bench_with_input(BenchmarkId::new("hierarchy", n), &rs, |b, rs| {
            b.iter(|| build_hierarchy(rs, 2, SpectralOrder::Smallest).unwrap());
        });
        group.bench_with_input(BenchmarkId::new("cluster_then_merge", n), &rs, |b, rs| {
            b.iter(|| cluster_then_merge(rs, 2, SpectralOrder::Smallest).unwrap());
        });
    }
    group.finish();
}

fn bench_tableau(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 16usize;
    let mut g = GraphState::new();
    let ids: Vec<_> = (0..n).map(|i| g.add_qubit(i as u32)).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(0.3) {
                g.add_edge(ids[i], ids[j]).unwrap();
            }
        }
    }
    c.bench_function("tableau_measure_chain", |b| {
        b.iter(|| {
            let mut tab = StabilizerTableau::from_graph(&g);
            for basis in [Basis::X, Basis::Y, Basis::Z] {
                tab.measure_and_remove(0, basis);
            }
            tab.to_graph_state(|l| g.owner(l).unwrap())
        });
    });
}

fn bench_verify(c: &mut Criterion) {
    let n = 16usize;
    let rs = uniform_set(n);
    let res: ResourceState = merge_requests(&rs);
    c.bench_function("verify_recipes_n16", |b| {
        b.iter(|| {
            for (i, r) in rs.requests().iter().enumerate() {
                verify_recipe(&res, i, r).unwrap();
            }
        });
    });
}

criterion_group!(
    benches,
    bench_generate,
    bench_merge,
    bench_spectral,
    bench_tableau,
    bench_verify
);
criterion_main!(benches);
