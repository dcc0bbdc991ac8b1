//! Index-ordered parallel map with a deterministic error.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs `f(0), ..., f(count - 1)` on `threads` workers (the current pool
/// when `None`) and returns results in index order. On failure the error of
/// the lowest failing index is returned, independent of scheduling.
pub(crate) fn map_indexed<T, F>(count: usize, threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let run = || -> Vec<Result<T>> { (0..count).into_par_iter().map(&f).collect() };
    let results = match threads {
        Some(0) => return Err(Error::InvalidConfig("threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    results.into_iter().collect()
}
