//! Replicate fan-out.

use alloc::vec::Vec;

/// Maps a function over replicate indices `0..n`, returning results in index
/// order. Implementations may run the calls concurrently, but must not change
/// any result: callers derive all randomness from the index.
pub trait Executor: Sync {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Runs `f` over `0..n` in fixed-size chunks so each chunk can reuse scratch
/// buffers. `f(range, out)` must push exactly one result per index.
pub fn map_chunked<E, T, F>(exec: &E, n: usize, chunk: usize, f: F) -> Vec<T>
where
    E: Executor + ?Sized,
    T: Send,
    F: Fn(core::ops::Range<usize>, &mut Vec<T>) + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = n.div_ceil(chunk);
    let parts = exec.map_indexed(n_chunks, |c| {
        let lo = c * chunk;
        let hi = (lo + chunk).min(n);
        let mut out = Vec::with_capacity(hi - lo);
        f(lo..hi, &mut out);
        debug_assert_eq!(out.len(), hi - lo);
        out
    });
    let mut all = Vec::with_capacity(n);
    for p in parts {
        all.extend(p);
    }
    all
}
