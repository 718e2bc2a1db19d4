//! Order-preserving parallel maps on a worker pool capped by `LAWBOUND_THREADS`.

#[cfg(feature = "parallel")]
mod imp {
    use rayon::prelude::*;
    use std::sync::OnceLock;

    fn pool() -> &'static rayon::ThreadPool {
        static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
        POOL.get_or_init(|| {
            let threads = std::env::var("LAWBOUND_THREADS")
                .ok()
                .and_then(|s| s.trim().parse::<usize>().ok())
                .filter(|&t| t > 0)
                .unwrap_or(0);
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("worker pool")
        })
    }

    pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        pool().install(|| items.par_iter().map(&f).collect())
    }

    pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        pool().install(|| (0..n).into_par_iter().map(&f).collect())
    }

    pub fn threads() -> usize {
        pool().current_num_threads()
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
    where
        F: Fn(&T) -> R,
    {
        items.iter().map(f).collect()
    }

    pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
    where
        F: Fn(usize) -> R,
    {
        (0..n).map(f).collect()
    }

    pub fn threads() -> usize {
        1
    }
}

pub use imp::{map, map_range, threads};

/// Sum in index order so the result does not depend on how work was split.
pub fn ordered_sum(values: &[f64]) -> f64 {
    values.iter().sum()
}
