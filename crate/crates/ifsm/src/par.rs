//! Thin switch between rayon and sequential execution.
//!
//! Built with the `parallel` feature (the default) these helpers fan work
//! out over rayon; without it they run in place. Chunked fills keep the
//! per-element summation order fixed, so results do not depend on the
//! thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `0..n` to a vector, in index order.
#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Fill `out` by chunks; `f` receives the chunk's starting index and slice.
#[cfg(feature = "parallel")]
pub(crate) fn fill_chunked<F>(out: &mut [f64], chunk: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    out.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(k, slice)| f(k * chunk, slice));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn fill_chunked<F>(out: &mut [f64], chunk: usize, f: F)
where
    F: Fn(usize, &mut [f64]),
{
    out.chunks_mut(chunk)
        .enumerate()
        .for_each(|(k, slice)| f(k * chunk, slice));
}
