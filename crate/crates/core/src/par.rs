//! Data-parallel helpers. With the `parallel` feature (default) work is
//! spread over rayon; without it everything runs sequentially. Results are
//! always collected in index order, so output never depends on scheduling.

/// Worker count for the parallel sections.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    Threads(usize),
}

impl Parallelism {
    pub fn from_jobs(jobs: usize) -> Self {
        if jobs <= 1 {
            Parallelism::Sequential
        } else {
            Parallelism::Threads(jobs)
        }
    }
}

thread_local! {
    static SEQUENTIAL: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

/// `(0..n).map(f).collect()`, in parallel where enabled.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if SEQUENTIAL.with(|s| s.get()) {
        return (0..n).map(f).collect();
    }
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Runs `f` with the requested parallelism.
#[cfg(feature = "parallel")]
pub fn install<R: Send>(parallelism: Parallelism, f: impl FnOnce() -> R + Send) -> R {
    match parallelism {
        Parallelism::Sequential => {
            let prev = SEQUENTIAL.with(|s| s.replace(true));
            let out = f();
            SEQUENTIAL.with(|s| s.set(prev));
            out
        }
        Parallelism::Threads(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(e) => {
                log::warn!("could not build a {}-thread pool ({}); running sequentially", n, e);
                f()
            }
        },
    }
}

#[cfg(not(feature = "parallel"))]
pub fn install<R: Send>(_parallelism: Parallelism, f: impl FnOnce() -> R + Send) -> R {
    f()
}
