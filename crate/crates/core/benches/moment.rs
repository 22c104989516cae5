//! Moment accumulation and screening, one worker versus the default pool.
//!
//! Build with `--no-default-features` to measure the purely sequential
//! code path; with the default `parallel` feature the two groups compare a
//! one-thread rayon pool against all available cores.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use steinselect::data::{center_columns, simulate, Case, SimSpec};
use steinselect::moment::{moment_diagonal, stein_moment};
use steinselect::parallel::with_jobs;
use steinselect::score::{sample_covariance, CovarianceModel};
use steinselect::data::ar1_covariance;

fn jobs_grid() -> Vec<usize> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    if all > 1 {
        vec![1, all]
    } else {
        vec![1]
    }
}

fn bench_moment(c: &mut Criterion) {
    let mut group = c.benchmark_group("stein_moment");
    group.sample_size(10);
    for &(n, p) in &[(2000usize, 50usize), (2000, 200)] {
        let (d, _) = simulate(&SimSpec::new(Case::Case1, n, p, 1)).unwrap();
        let d = center_columns(&d);
        let cov = sample_covariance(&d).unwrap();
        for jobs in jobs_grid() {
            group.bench_with_input(
                BenchmarkId::new(format!("n{n}_p{p}"), format!("jobs{jobs}")),
                &jobs,
                |b, &jobs| b.iter(|| with_jobs(jobs, || stein_moment(black_box(&d), &cov).unwrap())),
            );
        }
    }
    group.finish();
}

fn bench_diagonal(c: &mut Criterion) {
    let mut group = c.benchmark_group("moment_diagonal");
    group.sample_size(10);
    let (n, p) = (1000, 1000);
    let (d, _) = simulate(&SimSpec::new(Case::Case1, n, p, 2)).unwrap();
    let cov = CovarianceModel::known(ar1_covariance(p, 0.0)).unwrap();
    for jobs in jobs_grid() {
        group.bench_with_input(BenchmarkId::new("n1000_p1000", format!("jobs{jobs}")), &jobs, |b, &jobs| {
            b.iter(|| with_jobs(jobs, || moment_diagonal(black_box(&d), &cov).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_moment, bench_diagonal);
criterion_main!(benches);
