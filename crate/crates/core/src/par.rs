//! Order-preserving map over independent items.
//!
//! With the `parallel` feature and `jobs > 1` the work runs on a dedicated
//! rayon pool of `jobs` threads; otherwise it runs in order on the caller's
//! thread. Both paths return results in input order.

pub fn map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool builds");
        return pool.install(|| items.par_iter().map(&f).collect());
    }
    let _ = jobs;
    items.iter().map(f).collect()
}

/// Whether this build can run work in parallel.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    #[test]
    fn keeps_order() {
        let xs: Vec<u64> = (0..500).collect();
        let seq = super::map(&xs, 1, |x| x * x);
        let par = super::map(&xs, 4, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[499], 499 * 499);
    }
}
