//! Data-parallel map used for trajectories, scan cells and bootstrap resamples.
//!
//! With the `parallel` feature the work runs on the global rayon pool; without
//! it, on the calling thread. Output order always follows input order, so the
//! two builds produce identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Same as [`par_map`] over `0..n`.
pub fn par_map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    par_map(&idx, |&i| f(i))
}

/// Sequential reference, always available; benches compare against it.
pub fn seq_map<T, R, F: Fn(&T) -> R>(items: &[T], f: F) -> Vec<R> {
    items.iter().map(f).collect()
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let v: Vec<u64> = (0..1000).collect();
        assert_eq!(par_map(&v, |x| x * x), seq_map(&v, |x| x * x));
        assert_eq!(par_map_range(5, |i| i + 1), vec![1, 2, 3, 4, 5]);
    }
}
