//! Internal parallelism cap.
//!
//! `CORAL_CLOZE_THREADS` limits the worker pool used for featurization.
//! Work stays order-preserving (parallel map, sequential collect), so the
//! thread count never changes results.

use std::sync::OnceLock;

pub const THREADS_ENV: &str = "CORAL_CLOZE_THREADS";

static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();

fn pool() -> &'static Option<rayon::ThreadPool> {
    POOL.get_or_init(|| {
        let requested = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n >= 1)?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(requested)
            .build()
            .ok()
    })
}

/// Runs `f` inside the capped pool when the env var is set, otherwise on
/// the default rayon pool.
pub fn run<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match pool() {
        Some(p) => p.install(f),
        None => f(),
    }
}
