//! Data-parallel fan-out with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Parallelism::Parallel`] runs on the
//! rayon global pool, or on whatever pool the caller installed. Without the
//! feature every mode runs sequentially. Output order always matches input order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    /// Whether work will actually be spread over threads in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

pub fn map<T, U, F>(items: &[T], mode: Parallelism, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Runs `f` inside a dedicated pool of `threads` workers when parallel, so
/// nested [`map`] calls share that bound.
pub fn with_pool<R: Send>(threads: usize, mode: Parallelism, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = (threads, mode);
    f()
}
