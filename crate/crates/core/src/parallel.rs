//! Order-preserving data-parallel maps over index ranges.
//!
//! With the `parallel` feature the work is spread over a rayon pool; without
//! it the same closures run sequentially. Results are collected in index order
//! either way, so outputs do not depend on scheduling.

use crate::error::Result;

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
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

/// Fallible variant of [`map_indexed`]; the error of the lowest failing index wins.
pub fn try_map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map_indexed(n, f).into_iter().collect()
}

/// Runs `op` with at most `workers` threads (0 = available parallelism).
#[cfg(feature = "parallel")]
pub fn with_workers<R, OP>(workers: usize, op: OP) -> R
where
    R: Send,
    OP: FnOnce() -> R + Send,
{
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(op),
        Err(e) => {
            log::warn!("falling back to the global pool: {e}");
            op()
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<R, OP>(_workers: usize, op: OP) -> R
where
    R: Send,
    OP: FnOnce() -> R + Send,
{
    op()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_preserved_for_any_worker_count() {
        let a = with_workers(1, || map_indexed(100, |i| i * i));
        let b = with_workers(4, || map_indexed(100, |i| i * i));
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
    }

    #[test]
    fn first_error_reported() {
        let r: Result<Vec<usize>> = try_map_indexed(10, |i| {
            if i >= 3 {
                Err(crate::Error::InvalidParameter(format!("{i}")))
            } else {
                Ok(i)
            }
        });
        assert!(matches!(r, Err(crate::Error::InvalidParameter(s)) if s == "3"));
    }
}
