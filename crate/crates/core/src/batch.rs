//! Running independent simulations over many input points.
//!
//! With the `parallel` feature (on by default) points are spread over a
//! rayon pool; without it they run one after another. Results always come
//! back in input order.

/// Maps `f` over `items` one at a time.
pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Maps `f` over `items` on the global rayon pool, or on a dedicated pool of
/// `jobs` threads when given.
#[cfg(feature = "parallel")]
pub fn map_parallel<T, R, F>(items: &[T], jobs: Option<usize>, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;

    match jobs {
        Some(1) => map_sequential(items, f),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(_) => map_sequential(items, f),
        },
        None => items.par_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_parallel<T, R, F>(items: &[T], _jobs: Option<usize>, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_sequential(items, f)
}

/// Whether [`map_parallel`] actually runs concurrently in this build.
pub const PARALLEL: bool = cfg!(feature = "parallel");
