//! Reductions whose result does not depend on the number of worker threads.
//!
//! Inputs are cut into fixed-size chunks, each chunk is summed sequentially,
//! and the chunk partials are combined left to right. Rayon only decides
//! which worker computes which chunk, never the association order.

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const CHUNK: usize = 1024;

pub fn sum(values: &[f64]) -> f64 {
    let partials: Vec<f64> = values
        .par_chunks(CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect();
    partials.into_iter().sum()
}

/// Sum of `f(i)` over `0..len` with the same chunking as [`sum`].
pub fn sum_by<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let n_chunks = len.div_ceil(CHUNK);
    let partials: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(len);
            (lo..hi).map(&f).sum::<f64>()
        })
        .collect();
    partials.into_iter().sum()
}

/// Runs `f` on a dedicated pool with `threads` workers; `None` or zero uses
/// the ambient pool.
pub fn with_threads<T, F>(threads: Option<usize>, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    match threads {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::param(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}
