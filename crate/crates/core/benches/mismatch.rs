use criterion::{criterion_group, criterion_main, Criterion};
use netmorph_core::geometry::{Hypercube, LinearPiece, Simplex};
use netmorph_core::regress::{build_deep_piece_2d, build_wide_piece_2d, choose_params, Mode};
use netmorph_core::verify::{mismatch_measure_with, Compare, Execution};

fn bench(c: &mut Criterion) {
    let piece = LinearPiece::new(Simplex::template(2), vec![1.0, -0.5], 0.25).unwrap();
    let wide = build_wide_piece_2d(&piece, &choose_params(Mode::Wide, 2, 1.0, 0.05).unwrap())
        .unwrap()
        .network;
    let deep = build_deep_piece_2d(&piece, &choose_params(Mode::Deep, 2, 1.0, 0.05).unwrap())
        .unwrap()
        .network;
    let domain = Hypercube::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let mut g = c.benchmark_group("mismatch_200k");
    g.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        g.bench_function(name, |b| {
            b.iter(|| {
                mismatch_measure_with(&wide, &deep, &domain, 200_000, 1, Compare::Value { tol: 1e-6 }, exec).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
