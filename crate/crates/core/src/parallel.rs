//! Worker-pool plumbing with a determinism contract.
//!
//! Parallel entry points (slab scans, the experiment pipeline, the
//! propagation harness) split work by index, give every index its own
//! seeded RNG stream, and merge results back by index. Outputs are
//! therefore bit-identical for any pool size; the pool size only changes
//! wall-clock time.
//!
//! The pool size is resolved, in order, from:
//! 1. an explicit override set via [`set_thread_override`] (tests), then
//! 2. the `DG_THREADS` environment variable, then
//! 3. the rayon default (one thread per logical CPU).

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::ThreadPool;

use crate::error::{DgError, Result};

/// 0 means "no override".
static THREAD_OVERRIDE: AtomicUsize = AtomicUsize::new(0);

/// Force a pool size for subsequent parallel calls (`None` clears it).
///
/// Intended for tests that exercise the determinism contract without
/// mutating the process environment.
pub fn set_thread_override(threads: Option<usize>) {
    THREAD_OVERRIDE.store(threads.unwrap_or(0), Ordering::SeqCst);
}

/// Pool size from `DG_THREADS`, if set and parseable to a positive count.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("DG_THREADS")
        .ok()
        .and_then(|raw| raw.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// The pool size the next parallel call will use (`None` = rayon default).
pub fn resolved_threads() -> Option<usize> {
    match THREAD_OVERRIDE.load(Ordering::SeqCst) {
        0 => threads_from_env(),
        n => Some(n),
    }
}

/// Build the worker pool for one parallel call.
pub fn build_pool() -> Result<ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = resolved_threads() {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| DgError::invalid("DG_THREADS", e.to_string()))
}
