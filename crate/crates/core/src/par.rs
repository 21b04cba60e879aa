//! Data-parallel helpers.
//!
//! Batch operations in this crate take an [`Execution`] and route through
//! [`map`] / [`try_map`]. With the `parallel` feature the work is spread over
//! the rayon pool; without it, or with [`Execution::Sequential`], the same
//! closure runs in a plain loop. Results are always returned in input order so
//! both routes produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Like [`map`] but short-circuits on the first error (in input order for the
/// sequential route; some error for the parallel one).
pub fn try_map<T, R, E, F>(exec: Execution, items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_routes_preserve_order() {
        let items: Vec<u64> = (0..1000).collect();
        let a = map(Execution::Sequential, &items, |x| x * x);
        let b = map(Execution::Parallel, &items, |x| x * x);
        assert_eq!(a, b);
    }

    #[test]
    fn try_map_propagates_error() {
        let items = [1, 2, 3];
        let r: Result<Vec<i32>, String> = try_map(Execution::Parallel, &items, |&x| {
            if x == 2 {
                Err("two".to_string())
            } else {
                Ok(x)
            }
        });
        assert_eq!(r.unwrap_err(), "two");
    }
}
