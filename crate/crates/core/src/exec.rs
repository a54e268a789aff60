//! Task execution with an optional rayon backend.
//!
//! Results always come back in task-index order. Without the `parallel`
//! feature every executor runs sequentially.

/// How independent tasks are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Executor {
    Sequential,
    /// Work-stealing pool with the given worker count.
    Parallel(usize),
}

impl Executor {
    pub fn with_workers(workers: usize) -> Self {
        if workers <= 1 {
            Executor::Sequential
        } else {
            Executor::Parallel(workers)
        }
    }

    /// Evaluates `f(0), …, f(n−1)` and returns the results in index order.
    pub fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match *self {
            Executor::Sequential => (0..n).map(f).collect(),
            Executor::Parallel(workers) => parallel_map(workers, n, f),
        }
    }
}

impl Default for Executor {
    fn default() -> Self {
        Executor::Sequential
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<R, F>(workers: usize, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<R, F>(_workers: usize, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_workers() {
        let seq = Executor::Sequential.map(100, |i| i * i);
        let par = Executor::Parallel(8).map(100, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(Executor::with_workers(1), Executor::Sequential);
    }
}
