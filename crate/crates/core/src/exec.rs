//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run sequentially. Reductions are deterministic in both modes: maxima
//! break ties on the smaller key, so results never depend on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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

/// Maps `f` over a slice, preserving order.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Returns the index and value of the maximum of `f` over `items`.
///
/// NaN values are skipped. Ties resolve to the smallest `Ord` key of the
/// item, which for cubes is the lexicographic cube address.
pub fn argmax_by<T, F>(items: &[T], f: F) -> Option<(usize, f64)>
where
    T: Sync + Ord,
    F: Fn(&T) -> f64 + Sync + Send,
{
    let better = |a: (usize, f64), b: (usize, f64)| -> (usize, f64) {
        if b.1 > a.1 || (b.1 == a.1 && items[b.0] < items[a.0]) {
            b
        } else {
            a
        }
    };
    let init = (usize::MAX, f64::NEG_INFINITY);
    let pick = |a: (usize, f64), b: (usize, f64)| {
        if a.0 == usize::MAX {
            b
        } else if b.0 == usize::MAX {
            a
        } else {
            better(a, b)
        }
    };
    #[cfg(feature = "parallel")]
    let best = items
        .par_iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let v = f(t);
            (!v.is_nan()).then_some((i, v))
        })
        .reduce(|| init, pick);
    #[cfg(not(feature = "parallel"))]
    let best = items
        .iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let v = f(t);
            (!v.is_nan()).then_some((i, v))
        })
        .fold(init, pick);
    (best.0 != usize::MAX).then_some(best)
}

/// Maximum of a float iterator produced in parallel over `0..n`; NaN-free inputs assumed.
pub fn max_range<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n)
            .into_par_iter()
            .map(f)
            .reduce(|| f64::NEG_INFINITY, f64::max)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// True when the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
