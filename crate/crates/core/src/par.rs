//! Data-parallel helpers with a sequential fallback.
//!
//! Work is always split into fixed-size chunks and partial results are
//! returned in chunk order, so floating-point reductions are identical with
//! or without the `parallel` feature and for any thread count.

/// Samples per chunk for batch reductions.
pub const CHUNK: usize = 256;

/// Applies `f` to each `[start, end)` chunk of `0..n` and returns the results
/// in order.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk);
    map_indices(count, |c| {
        let start = c * chunk;
        f(start, (start + chunk).min(n))
    })
}

/// Applies `f` to every index in `0..n`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Maps over a slice, preserving order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_indices(items.len(), |i| f(&items[i]))
}

/// Configures the global worker pool. No-op without the `parallel` feature.
pub fn set_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        // a pool may already exist (tests, repeated calls); keep it then
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range_in_order() {
        let parts = map_chunks(1000, 256, |a, b| (a, b));
        assert_eq!(parts, vec![(0, 256), (256, 512), (512, 768), (768, 1000)]);
        assert!(map_chunks(0, 256, |a, b| (a, b)).is_empty());
    }
}
