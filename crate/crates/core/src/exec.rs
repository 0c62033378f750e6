//! Data-parallel execution facade.
//!
//! With the default `parallel` feature the heavy inner loops (per-user
//! randomization, Monte Carlo trials, bag analysis) run on rayon; without it
//! they fall back to plain sequential iteration. Both paths produce identical
//! results because every work unit derives its randomness from
//! [`crate::rng::substream`] and all reductions are order-independent
//! integer/collect operations.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..count`, preserving index order in the output.
#[cfg(feature = "parallel")]
pub fn map_indexed<T: Send, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

/// Map `f` over `0..count`, preserving index order in the output.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    map_indexed_serial(count, f)
}

/// Sequential twin of [`map_indexed`], always available (benchmarks compare
/// the two).
pub fn map_indexed_serial<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}

/// Accumulate per-item contributions into a shared `u64` count vector of
/// length `len`. `per_item` may increment any number of slots.
#[cfg(feature = "parallel")]
pub fn accumulate_counts<M, F>(items: &[M], len: usize, per_item: F) -> Vec<u64>
where
    M: Sync,
    F: Fn(&M, &mut [u64]) + Sync + Send,
{
    // Chunked fold keeps per-thread vectors; u64 addition makes the merge
    // order irrelevant.
    let chunk = (items.len() / (rayon::current_num_threads() * 4)).max(1024);
    items
        .par_chunks(chunk)
        .fold(
            || vec![0u64; len],
            |mut counts, chunk| {
                for item in chunk {
                    per_item(item, &mut counts);
                }
                counts
            },
        )
        .reduce(
            || vec![0u64; len],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}

/// Accumulate per-item contributions into a `u64` count vector of length `len`.
#[cfg(not(feature = "parallel"))]
pub fn accumulate_counts<M, F>(items: &[M], len: usize, per_item: F) -> Vec<u64>
where
    F: Fn(&M, &mut [u64]),
{
    accumulate_counts_serial(items, len, per_item)
}

/// Sequential twin of [`accumulate_counts`].
pub fn accumulate_counts_serial<M, F>(items: &[M], len: usize, per_item: F) -> Vec<u64>
where
    F: Fn(&M, &mut [u64]),
{
    let mut counts = vec![0u64; len];
    for item in items {
        per_item(item, &mut counts);
    }
    counts
}
