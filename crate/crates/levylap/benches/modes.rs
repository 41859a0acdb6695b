//! Parallel vs sequential execution of the data-parallel inner loops:
//! direction sweeps for the holonomy Laplacian, Monte Carlo Parseval
//! sampling, and multi-seed pathwise estimates.
//!
//! With the default `parallel` feature the same workload is additionally
//! timed inside a single-threaded rayon pool, giving an in-run comparison;
//! building with `--no-default-features` benches the true sequential
//! fallback (criterion baselines make the cross-run comparison).

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use levylap::basis::PathCoeffs;
use levylap::cesaro::DEFAULT_TOL;
use levylap::chaos::{parseval_mc, ChaosVector};
use levylap::gauge::Connection;
use levylap::stoch::verify_thm1;
use levylap::transport::levy_laplacian_transport;

fn mode_name() -> &'static str {
    if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "sequential"
    }
}

fn bench_direction_sweep(c: &mut Criterion) {
    let conn = Connection::su2_polynomial(4);
    let mut path = PathCoeffs::new(2);
    path.set(1, 1, 1.0);
    path.set(2, 2, 0.5);
    let mut group = c.benchmark_group("direction_sweep");
    group.sample_size(10);
    group.bench_function(mode_name(), |b| {
        b.iter(|| {
            let s = levy_laplacian_transport(&conn, &path, 1.0, 64, 512, DEFAULT_TOL).unwrap();
            black_box(s.last().frob_norm())
        })
    });
    #[cfg(feature = "parallel")]
    group.bench_function("single-thread-pool", |b| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        b.iter(|| {
            pool.install(|| {
                let s =
                    levy_laplacian_transport(&conn, &path, 1.0, 64, 512, DEFAULT_TOL).unwrap();
                black_box(s.last().frob_norm())
            })
        })
    });
    group.finish();
}

fn bench_parseval(c: &mut Criterion) {
    let chaos = ChaosVector::random_sparse(6, 2, 1, 4, 8, 0.6, 99);
    let mut group = c.benchmark_group("parseval_mc");
    group.sample_size(10);
    group.bench_function(mode_name(), |b| {
        b.iter(|| black_box(parseval_mc(&chaos, 20_000, 7).empirical_mean))
    });
    #[cfg(feature = "parallel")]
    group.bench_function("single-thread-pool", |b| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        b.iter(|| pool.install(|| black_box(parseval_mc(&chaos, 20_000, 7).empirical_mean)))
    });
    group.finish();
}

fn bench_pathwise_seeds(c: &mut Criterion) {
    let conn = Connection::quadratic_abelian(1.0);
    let seeds: Vec<u64> = (0..4).collect();
    let mut group = c.benchmark_group("pathwise_seeds");
    group.sample_size(10);
    group.bench_function(mode_name(), |b| {
        b.iter(|| {
            let rep = verify_thm1(&conn, &seeds, 1 << 10, &[4, 8], 1e-2).unwrap();
            black_box(rep.mean_rel_gap[0])
        })
    });
    #[cfg(feature = "parallel")]
    group.bench_function("single-thread-pool", |b| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        b.iter(|| {
            pool.install(|| {
                let rep = verify_thm1(&conn, &seeds, 1 << 10, &[4, 8], 1e-2).unwrap();
                black_box(rep.mean_rel_gap[0])
            })
        })
    });
    group.finish();
}

criterion_group!(modes, bench_direction_sweep, bench_parseval, bench_pathwise_seeds);
criterion_main!(modes);
