//! Deterministic data-parallel helpers.
//!
//! Sample loops are cut into fixed blocks of [`BLOCK_ROWS`] rows and the
//! per-block partials are combined by a pairwise tree whose shape depends
//! only on the block count. With the `parallel` feature the two halves of
//! each tree node run under `rayon::join`; without it the same tree is
//! walked sequentially. Either way the floating-point summation order is
//! identical, so outputs do not depend on the feature or the thread count.

use std::ops::Range;

/// Rows per block in sample reductions.
pub const BLOCK_ROWS: usize = 256;

/// Splits `0..n` into consecutive blocks of at most `block` rows.
pub fn blocks(n: usize, block: usize) -> Vec<Range<usize>> {
    assert!(block > 0);
    (0..n.div_ceil(block))
        .map(|b| b * block..((b + 1) * block).min(n))
        .collect()
}

/// Maps every row block of `0..n` and folds the results with a fixed
/// pairwise tree. Returns `None` when `n == 0`.
pub fn tree_reduce<T, M, R>(n: usize, map: M, reduce: R) -> Option<T>
where
    T: Send,
    M: Fn(Range<usize>) -> T + Sync,
    R: Fn(T, T) -> T + Sync,
{
    let parts = blocks(n, BLOCK_ROWS);
    if parts.is_empty() {
        return None;
    }
    Some(reduce_range(&parts, &map, &reduce))
}

fn reduce_range<T, M, R>(parts: &[Range<usize>], map: &M, reduce: &R) -> T
where
    T: Send,
    M: Fn(Range<usize>) -> T + Sync,
    R: Fn(T, T) -> T + Sync,
{
    if parts.len() == 1 {
        return map(parts[0].clone());
    }
    let (left, right) = parts.split_at(parts.len() / 2);
    let (a, b) = join(
        || reduce_range(left, map, reduce),
        || reduce_range(right, map, reduce),
    );
    reduce(a, b)
}

/// `rayon::join` when parallel, plain sequential evaluation otherwise.
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    {
        rayon::join(a, b)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (a(), b())
    }
}

/// Order-preserving map over a slice, parallel when the feature is on.
pub fn map_collect<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(usize, &I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().enumerate().map(|(i, it)| f(i, it)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().enumerate().map(|(i, it)| f(i, it)).collect()
    }
}

/// Runs `f` on a pool of `jobs` threads. Without the `parallel` feature
/// this just calls `f`.
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        f()
    }
}
