//! Deterministic chunked execution.
//!
//! Monte Carlo work is split into fixed-size chunks and each chunk is
//! computed by an independent task with its own RNG stream. Because the
//! split is a pure function of the request size — never of the worker
//! count — concatenating the chunk results gives bit-identical output
//! whether the tasks run sequentially or on a thread pool.
//!
//! [`CHUNK_SIZE`] is part of that contract: changing it changes which
//! stream produces which draw, and therefore the output of every seeded
//! sampler. Do not tune it per machine.

/// Number of rows produced per RNG stream.
pub const CHUNK_SIZE: usize = 8192;

/// Number of chunks needed for `n` rows.
pub fn chunk_count(n: usize) -> usize {
    n.div_ceil(CHUNK_SIZE)
}

/// Number of rows in chunk `index` out of `n` total rows.
pub fn chunk_len(index: usize, n: usize) -> usize {
    let start = index * CHUNK_SIZE;
    debug_assert!(start < n || n == 0);
    CHUNK_SIZE.min(n - start)
}

/// Maximum worker count requested via `COPULA_FORGE_THREADS`.
///
/// `None` means no cap (unset, unparsable or `0`): one worker per core.
/// The variable is read once, when the pool is first used.
pub fn thread_cap() -> Option<usize> {
    match std::env::var("COPULA_FORGE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) | Err(_) => None,
            Ok(k) => Some(k),
        },
        Err(_) => None,
    }
}

/// Runs `task` for every index in `0..tasks` and collects the results in
/// index order. Sequential fallback used when the `parallel` feature is
/// off; otherwise runs on the shared pool.
#[cfg(feature = "parallel")]
pub fn map_chunks<T, F>(tasks: usize, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    pool().install(|| (0..tasks).into_par_iter().map(task).collect())
}

/// Runs `task` for every index in `0..tasks` and collects the results in
/// index order. Sequential fallback used when the `parallel` feature is
/// off; otherwise runs on the shared pool.
#[cfg(not(feature = "parallel"))]
pub fn map_chunks<T, F>(tasks: usize, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_chunks_sequential(tasks, task)
}

/// Same contract as [`map_chunks`], always on the calling thread.
///
/// Kept public (alongside the `*_seq` sampler variants) so tests and
/// benchmarks can compare the two execution paths directly.
pub fn map_chunks_sequential<T, F>(tasks: usize, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..tasks).map(task).collect()
}

#[cfg(feature = "parallel")]
fn pool() -> &'static rayon::ThreadPool {
    use std::sync::OnceLock;
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(thread_cap().unwrap_or(0)) // 0 = one per core
            .build()
            .expect("failed to build worker pool")
    })
}
