use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fsre_core::metricspace::{
    exact_pair_fill, fill_negative, fill_positive, sqdist_with, top_e_candidates, NegativeFill, PairRoute, SupportBlocks,
};
use fsre_core::par::Exec;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Setup {
    dh: Array2<f64>,
    dt: Array2<f64>,
    blocks: SupportBlocks,
    labels: Vec<Vec<u8>>,
    positives: Vec<PairRoute>,
}

fn setup(m: usize, support: usize, positives: usize) -> Setup {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let blocks = SupportBlocks::uniform(support, m);
    let mut states = |rows| Array2::from_shape_fn((rows, 32), |_| rng.gen_range(-1.0..1.0));
    let (qh, qt, sh, st) = (states(m), states(m), states(blocks.total()), states(blocks.total()));
    let dh = sqdist_with(Exec::Sequential, qh.view(), sh.view()).unwrap();
    let dt = sqdist_with(Exec::Sequential, qt.view(), st.view()).unwrap();
    let mut labels = vec![vec![0u8; m * m]; support];
    let mut routes = Vec::new();
    while routes.len() < positives {
        let s = rng.gen_range(0..support);
        let cell = rng.gen_range(0..m * m);
        if labels[s][cell] == 0 {
            labels[s][cell] = 1;
            let off = blocks.offset(s);
            routes.push(PairRoute { row: off + cell / m, col: off + cell % m });
        }
    }
    Setup { dh, dt, blocks, labels, positives: routes }
}

fn fills(c: &mut Criterion) {
    let mut group = c.benchmark_group("label_distances");
    group.sample_size(20);
    for m in [20usize, 50] {
        let s = setup(m, 4, 8);
        let labels: Vec<&[u8]> = s.labels.iter().map(Vec::as_slice).collect();
        for (name, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)] {
            group.bench_with_input(BenchmarkId::new(format!("exact/{name}"), m), &m, |b, _| {
                b.iter(|| black_box(exact_pair_fill(s.dh.view(), s.dt.view(), &s.blocks, &labels, exec).unwrap()))
            });
            group.bench_with_input(BenchmarkId::new(format!("accel/{name}"), m), &m, |b, _| {
                b.iter(|| {
                    let (pos, _) = fill_positive(s.dh.view(), s.dt.view(), &s.blocks, &s.positives, exec).unwrap();
                    let top = top_e_candidates(s.dh.view(), s.dt.view(), &s.blocks, 3, exec).unwrap();
                    black_box(fill_negative(&top, pos.as_ref(), NegativeFill::Min))
                })
            });
        }
    }
    group.finish();
}

fn kernels(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let q = Array2::from_shape_fn((50, 32), |_| rng.gen_range(-1.0..1.0));
    let s = Array2::from_shape_fn((200, 32), |_| rng.gen_range(-1.0..1.0));
    let mut group = c.benchmark_group("sqdist");
    for (name, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)] {
        group.bench_function(name, |b| b.iter(|| black_box(sqdist_with(exec, q.view(), s.view()).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, fills, kernels);
criterion_main!(benches);
