//! Thin dispatch layer between the rayon and sequential builds.
//!
//! Every helper assigns each output slot to exactly one task and keeps the
//! reductions inside a task sequential, so the parallel and sequential builds
//! produce bit-identical results and neither depends on scheduling order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fill each element of `out` from its index.
pub(crate) fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));

    #[cfg(not(feature = "parallel"))]
    out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
}

/// Visit row `i` of a flat row-major buffer with `width` columns.
pub(crate) fn for_each_row<F>(buf: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    debug_assert!(width >= 1 && buf.len().is_multiple_of(width));

    #[cfg(feature = "parallel")]
    buf.par_chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));

    #[cfg(not(feature = "parallel"))]
    buf.chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Map over mutable items (e.g. per-source warm-start slots), collecting the
/// results in input order and stopping on the first error.
pub(crate) fn try_map_mut<T, U, E, F>(items: &mut [T], f: F) -> Result<Vec<U>, E>
where
    T: Send,
    U: Send,
    E: Send,
    F: Fn(usize, &mut T) -> Result<U, E> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        items
            .par_iter_mut()
            .enumerate()
            .map(|(i, item)| f(i, item))
            .collect()
    }

    #[cfg(not(feature = "parallel"))]
    {
        items
            .iter_mut()
            .enumerate()
            .map(|(i, item)| f(i, item))
            .collect()
    }
}

/// Map over `0..n`, collecting results in index order and stopping on the
/// first error.
pub(crate) fn try_map_indexed<U, E, F>(n: usize, f: F) -> Result<Vec<U>, E>
where
    U: Send,
    E: Send,
    F: Fn(usize) -> Result<U, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }

    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Cap the number of worker threads. A no-op in the sequential build; an
/// error if a global pool already exists.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) -> Result<(), String> {
    Ok(())
}
