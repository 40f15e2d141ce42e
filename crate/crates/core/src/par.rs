//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper preserves input order in its output, so results do not depend
//! on whether the `parallel` feature is enabled or on the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, collecting results in input order.
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Maps `f` over `0..len`, collecting results in index order.
pub fn map_range<U, F>(len: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Fallible [`map`]: returns the first error in input order.
pub fn try_map<T, U, E, F>(items: &[T], f: F) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> Result<U, E> + Sync + Send,
{
    try_map_range(items.len(), |i| f(&items[i]))
}

/// Fallible [`map_range`]. Items after a known failure are skipped; items
/// before it still run, so the reported error is the first by index.
pub fn try_map_range<U, E, F>(len: usize, f: F) -> Result<Vec<U>, E>
where
    U: Send,
    E: Send,
    F: Fn(usize) -> Result<U, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let failed = AtomicUsize::new(usize::MAX);
        let out: Vec<Option<Result<U, E>>> = (0..len)
            .into_par_iter()
            .map(|i| {
                if i > failed.load(Ordering::Relaxed) {
                    return None;
                }
                let r = f(i);
                if r.is_err() {
                    failed.fetch_min(i, Ordering::Relaxed);
                }
                Some(r)
            })
            .collect();
        let mut ok = Vec::with_capacity(len);
        for r in out {
            match r {
                Some(Ok(v)) => ok.push(v),
                Some(Err(e)) => return Err(e),
                None => unreachable!("skipped items lie after a failure"),
            }
        }
        Ok(ok)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Number of worker threads the parallel helpers will use.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Runs `f` with the parallel helpers limited to `n` worker threads.
pub fn with_threads<R, F>(n: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
        {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let v: Vec<usize> = (0..1000).collect();
        assert_eq!(
            map(&v, |x| x * 2),
            v.iter().map(|x| x * 2).collect::<Vec<_>>()
        );
        assert_eq!(map_range(5, |i| i), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn pinned_thread_count() {
        assert_eq!(with_threads(1, threads), 1);
        let v: Vec<u64> = (0..100).collect();
        assert_eq!(with_threads(1, || map(&v, |x| x + 1)), map(&v, |x| x + 1));
    }

    #[test]
    fn first_error_wins() {
        let v: Vec<i32> = (0..100).collect();
        let r: Result<Vec<i32>, i32> = try_map(&v, |&x| if x % 10 == 7 { Err(x) } else { Ok(x) });
        assert_eq!(r, Err(7));
    }

    #[test]
    fn work_after_a_failure_is_skipped() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let calls = AtomicUsize::new(0);
        let r: Result<Vec<usize>, usize> = with_threads(1, || {
            try_map_range(10_000, |i| {
                calls.fetch_add(1, Ordering::Relaxed);
                if i == 3 {
                    Err(i)
                } else {
                    Ok(i)
                }
            })
        });
        assert_eq!(r, Err(3));
        assert!(calls.load(Ordering::Relaxed) < 10_000);
    }
}
