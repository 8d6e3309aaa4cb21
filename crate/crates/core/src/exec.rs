//! Ordered data-parallel map with a sequential fallback.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Sequential,
    Parallel,
}

static BACKEND: AtomicU8 = AtomicU8::new(if cfg!(feature = "parallel") { 1 } else { 0 });

/// Select the backend used by [`map`]. `Parallel` is ignored without the `parallel` feature.
pub fn set_backend(b: Backend) {
    let v = match b {
        Backend::Parallel if cfg!(feature = "parallel") => 1,
        _ => 0,
    };
    BACKEND.store(v, Ordering::Relaxed);
}

pub fn backend() -> Backend {
    if BACKEND.load(Ordering::Relaxed) == 1 {
        Backend::Parallel
    } else {
        Backend::Sequential
    }
}

/// Evaluate `f(0..len)` and return the results in index order.
pub fn map<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if backend() == Backend::Parallel {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    (0..len).map(f).collect()
}

/// Sum `f(0..len)` in index order, so the result does not depend on the backend.
pub fn sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map(len, f).into_iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backends_agree() {
        let f = |i: usize| ((i as f64) * 0.37).sin() / (1.0 + i as f64);
        set_backend(Backend::Sequential);
        let a = sum(10_000, f);
        set_backend(Backend::Parallel);
        let b = sum(10_000, f);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
