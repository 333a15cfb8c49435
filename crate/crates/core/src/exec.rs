//! Data-parallel helpers for the evaluation loops.
//!
//! With the default `parallel` feature the indexed map fans out over a rayon
//! thread pool; without it the same code runs sequentially. Results are
//! returned in input order either way, so callers are deterministic
//! regardless of scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `f` to every item with its index, preserving input order.
pub fn map_indexed<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().enumerate().map(|(i, item)| f(i, item)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().enumerate().map(|(i, item)| f(i, item)).collect()
    }
}

/// Sequential reference version of [`map_indexed`], kept available in all
/// builds for benchmarks comparing the two paths.
pub fn map_indexed_sequential<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(usize, &T) -> U,
{
    items.iter().enumerate().map(|(i, item)| f(i, item)).collect()
}
