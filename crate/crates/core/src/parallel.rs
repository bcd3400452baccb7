//! Order-preserving data-parallel map. With the `parallel` feature the work
//! runs on rayon; without it, or with `threads == 1`, it runs inline.

/// Map `f` over `items`, returning results in input order.
///
/// `threads == 0` uses rayon's global pool, `threads == 1` runs sequentially,
/// and any other value runs on a dedicated pool of that size.
pub fn map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_indexed(items, threads, |_, t| f(t))
}

pub fn map_indexed<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    if threads == 1 || items.len() < 2 {
        return sequential(items, f);
    }
    imp::run(items, threads, f)
}

fn sequential<T, R, F: Fn(usize, &T) -> R>(items: &[T], f: F) -> Vec<R> {
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(feature = "parallel")]
mod imp {
    use rayon::prelude::*;

    pub(super) fn run<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        let job = || items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
        if threads == 0 {
            return job();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(job),
            Err(e) => {
                log::warn!("falling back to the global pool: {e}");
                job()
            }
        }
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub(super) fn run<T, R, F>(items: &[T], _threads: usize, f: F) -> Vec<R>
    where
        F: Fn(usize, &T) -> R,
    {
        super::sequential(items, f)
    }
}

/// Whether this build can actually run work in parallel.
pub const fn enabled() -> bool {
    cfg!(feature = "parallel")
}
