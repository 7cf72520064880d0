//! Data-parallel building blocks with a sequential fallback.
//!
//! With the `parallel` feature the dispatching functions hand large inputs to
//! rayon; without it (or below [`PAR_THRESHOLD`]) they run the `_seq` variant.
//! Reductions are split into fixed [`CHUNK`]-sized pieces whose partial sums are
//! combined in index order, so the floating-point result does not depend on the
//! thread count or on whether the feature is enabled.

use crate::C64;

/// Minimum slice length handed to rayon.
pub const PAR_THRESHOLD: usize = 1 << 12;

/// Fixed reduction chunk length.
pub const CHUNK: usize = 1 << 10;

/// `out[i] = f(i)` for every index.
pub fn fill_indexed<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if out.len() >= PAR_THRESHOLD {
            return fill_indexed_par(out, f);
        }
    }
    fill_indexed_seq(out, f)
}

pub fn fill_indexed_seq<T, F>(out: &mut [T], f: F)
where
    F: Fn(usize) -> T,
{
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

#[cfg(feature = "parallel")]
pub fn fill_indexed_par<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * CHUNK;
        for (j, o) in chunk.iter_mut().enumerate() {
            *o = f(base + j);
        }
    });
}

/// `Σ_i f(i)` for `i in 0..len`, summed chunk-wise in a fixed order.
pub fn sum_indexed<F>(len: usize, f: F) -> C64
where
    F: Fn(usize) -> C64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if len >= PAR_THRESHOLD {
            return sum_indexed_par(len, f);
        }
    }
    sum_indexed_seq(len, f)
}

pub fn sum_indexed_seq<F>(len: usize, f: F) -> C64
where
    F: Fn(usize) -> C64,
{
    let mut total = C64::new(0.0, 0.0);
    let mut start = 0;
    while start < len {
        let end = (start + CHUNK).min(len);
        let mut part = C64::new(0.0, 0.0);
        for i in start..end {
            part += f(i);
        }
        total += part;
        start = end;
    }
    total
}

#[cfg(feature = "parallel")]
pub fn sum_indexed_par<F>(len: usize, f: F) -> C64
where
    F: Fn(usize) -> C64 + Sync + Send,
{
    use rayon::prelude::*;
    let n_chunks = len.div_ceil(CHUNK);
    let parts: Vec<C64> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(len);
            let mut part = C64::new(0.0, 0.0);
            for i in start..end {
                part += f(i);
            }
            part
        })
        .collect();
    parts.into_iter().fold(C64::new(0.0, 0.0), |a, b| a + b)
}

/// Map over independent work items, preserving input order in the output.
pub fn map_items<I, T, F>(items: Vec<I>, f: F) -> Vec<T>
where
    I: Send,
    T: Send,
    F: Fn(I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Configure the global worker pool. Returns `false` if it was already built.
pub fn init_workers(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}
