//! Execution policy for data-parallel loops.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool
//! capped at the configured ceiling. Without it every policy runs
//! sequentially. Results always come back in index order, so callers see
//! identical output under either policy.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    /// At most `threads` workers; 0 means the rayon default.
    Parallel { threads: usize },
}

impl Default for Execution {
    fn default() -> Self {
        Execution::Parallel { threads: 0 }
    }
}

impl Execution {
    pub fn with_ceiling(ceiling: usize) -> Self {
        if ceiling <= 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { threads: ceiling }
        }
    }
}

/// A ready-to-use executor. Building one allocates the thread pool once.
pub struct Executor {
    policy: Execution,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor").field("policy", &self.policy).finish()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Executor::new(Execution::default())
    }
}

impl Executor {
    pub fn new(policy: Execution) -> Self {
        #[cfg(feature = "parallel")]
        {
            let pool = match policy {
                Execution::Parallel { threads } if threads > 0 => {
                    rayon::ThreadPoolBuilder::new().num_threads(threads).build().ok()
                }
                _ => None,
            };
            Executor { policy, pool }
        }
        #[cfg(not(feature = "parallel"))]
        {
            Executor { policy }
        }
    }

    pub fn sequential() -> Self {
        Executor::new(Execution::Sequential)
    }

    pub fn policy(&self) -> Execution {
        self.policy
    }

    /// Maps `f` over `0..n`, returning results in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self.policy {
            Execution::Sequential => (0..n).map(f).collect(),
            Execution::Parallel { .. } => self.parallel_map(n, f),
        }
    }

    /// Like [`Executor::map`], returning the lowest-index error if any task fails.
    pub fn try_map<T, E, F>(&self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        match self.policy {
            // Stops at the first failure.
            Execution::Sequential => (0..n).map(f).collect(),
            Execution::Parallel { .. } => self.parallel_map(n, f).into_iter().collect(),
        }
    }

    #[cfg(feature = "parallel")]
    fn parallel_map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        use rayon::prelude::*;
        let run = || (0..n).into_par_iter().map(&f).collect::<Vec<T>>();
        match &self.pool {
            Some(pool) => pool.install(run),
            None => run(),
        }
    }

    #[cfg(not(feature = "parallel"))]
    fn parallel_map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
