//! Data-parallel execution helpers.
//!
//! Every heavy inner loop in the crate funnels through these two functions so
//! the whole library can be built with or without rayon (`parallel` feature).
//! Each work item writes to its own disjoint slot and is computed by the same
//! sequential code on both paths, so results are bit-identical regardless of
//! the feature flag or thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Work below this many f64 ops per call is not worth spawning tasks for.
#[cfg(feature = "parallel")]
const PAR_MIN_WORK: usize = 256 * 1024;

/// Apply `f` to every `row_len`-sized chunk of `out`, indexed by chunk number.
///
/// `work_per_row` is a rough op-count estimate used to decide whether the
/// parallel path pays for itself.
pub fn rows_mut<F>(out: &mut [f64], row_len: usize, work_per_row: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    debug_assert!(row_len > 0 && out.len().is_multiple_of(row_len));

    #[cfg(feature = "parallel")]
    {
        let n_rows = out.len() / row_len;
        if n_rows > 1 && n_rows * work_per_row.max(1) >= PAR_MIN_WORK {
            out.par_chunks_mut(row_len)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
            return;
        }
    }
    let _ = work_per_row;
    for (i, row) in out.chunks_mut(row_len).enumerate() {
        f(i, row);
    }
}

/// Map `f` over `0..n`, collecting results in index order.
///
/// Used for coarse-grained units (clips, grid cells, finite-difference
/// coordinates) where each item is substantial; always parallel when the
/// feature is on and `n > 1`.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n > 1 {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// SplitMix64 mixing for deriving independent sub-seeds.
pub fn mix_seed(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}
