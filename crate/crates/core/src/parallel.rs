//! Thread-pool helpers. `QCTRL_DETERMINISTIC=1` forces everything onto the
//! calling thread.

use rayon::prelude::*;

pub const DETERMINISTIC_VAR: &str = "QCTRL_DETERMINISTIC";

pub fn deterministic() -> bool {
    std::env::var(DETERMINISTIC_VAR).map(|v| v == "1").unwrap_or(false)
}

/// `(0..n).map(f)` evaluated on the rayon pool unless deterministic mode is
/// on. Output order always follows the index.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    if deterministic() || n <= 1 {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}

/// Runs `f` inside a pool capped at `max_workers` threads (ignored in
/// deterministic mode).
pub fn with_worker_cap<R: Send>(max_workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match max_workers {
        Some(w) if !deterministic() => match rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}
