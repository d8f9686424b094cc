/// Maps `f` over `items`, on a rayon pool of `threads` workers when the `parallel`
/// feature is on (0 = rayon's default size). Results keep the input order, so the
/// outcome never depends on scheduling.
#[cfg(feature = "parallel")]
pub fn map_points<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if threads != 1 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            return pool.install(|| items.par_iter().map(&f).collect());
        }
    }
    items.iter().map(f).collect()
}

/// Sequential fallback: `threads` is ignored.
#[cfg(not(feature = "parallel"))]
pub fn map_points<T, R, F>(items: &[T], _threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}
