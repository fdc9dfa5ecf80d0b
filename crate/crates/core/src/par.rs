//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature these dispatch to rayon; without it they run
//! the same closures in order. Every helper preserves output order and uses
//! a fixed reduction tree, so both builds agree bit for bit.

/// Chunk length for deterministic reductions. The reduction tree depends only
/// on this constant and the input length, never on the thread count.
pub const REDUCE_CHUNK: usize = 4096;

/// Maps `f` over `0..n` and collects the results in index order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps `f` over a slice and collects the results in order.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs `f(chunk_index, chunk)` over consecutive mutable chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Element-wise map of `input` into `output` (equal lengths).
pub fn zip_map<T, R, F>(input: &[T], output: &mut [R], f: F)
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    assert_eq!(input.len(), output.len());
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        output
            .par_chunks_mut(REDUCE_CHUNK)
            .zip(input.par_chunks(REDUCE_CHUNK))
            .for_each(|(o, i)| {
                for (dst, src) in o.iter_mut().zip(i) {
                    *dst = f(src);
                }
            });
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (dst, src) in output.iter_mut().zip(input) {
            *dst = f(src);
        }
    }
}

/// Sums `f(i)` for `i in 0..n` as a fixed two-level tree: sequential sums
/// within `REDUCE_CHUNK`-sized blocks, then a sequential sum of block totals.
pub fn sum_range<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let blocks = n.div_ceil(REDUCE_CHUNK);
    let partial = map_range(blocks, |b| {
        let start = b * REDUCE_CHUNK;
        let end = (start + REDUCE_CHUNK).min(n);
        let mut acc = 0.0;
        for i in start..end {
            acc += f(i);
        }
        acc
    });
    partial.iter().sum()
}

/// Like [`sum_range`] but accumulates several quantities at once.
pub fn sum_range_n<const K: usize, F>(n: usize, f: F) -> [f64; K]
where
    F: Fn(usize) -> [f64; K] + Sync + Send,
{
    let blocks = n.div_ceil(REDUCE_CHUNK);
    let partial = map_range(blocks, |b| {
        let start = b * REDUCE_CHUNK;
        let end = (start + REDUCE_CHUNK).min(n);
        let mut acc = [0.0; K];
        for i in start..end {
            let v = f(i);
            for k in 0..K {
                acc[k] += v[k];
            }
        }
        acc
    });
    let mut total = [0.0; K];
    for p in &partial {
        for k in 0..K {
            total[k] += p[k];
        }
    }
    total
}

/// Runs `f` on a pool with exactly `threads` workers. In the sequential
/// build this just calls `f`.
pub fn with_threads<R, F>(threads: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

/// Whether the crate was built with rayon support.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
