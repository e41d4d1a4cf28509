//! Worker pool and Monte Carlo run settings.
//!
//! Results are always collected in replicate-index order, so reductions are
//! independent of the number of workers.

use rayon::prelude::*;

pub const WORKERS_ENV: &str = "SUBHARNACK_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Workers(usize);

impl Default for Workers {
    fn default() -> Self {
        Workers(1)
    }
}

impl Workers {
    pub fn new(n: usize) -> Self {
        Workers(n.max(1))
    }

    /// Reads `SUBHARNACK_WORKERS`; single-threaded when unset or invalid.
    pub fn from_env() -> Self {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .map(Workers::new)
            .unwrap_or_default()
    }

    pub fn count(&self) -> usize {
        self.0
    }

    /// `(0..n).map(f)` evaluated on the pool, in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        if self.0 == 1 || n < 2 {
            return (0..n).map(f).collect();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(self.0).build() {
            Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            Err(_) => (0..n).map(f).collect(),
        }
    }
}

/// Monte Carlo replication settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McConfig {
    pub paths: usize,
    pub seed: u64,
    pub workers: Workers,
}

impl McConfig {
    pub fn new(paths: usize, seed: u64) -> Self {
        Self {
            paths,
            seed,
            workers: Workers::default(),
        }
    }

    pub fn with_workers(mut self, workers: Workers) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_across_worker_counts() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = Workers::new(1).map(1000, f);
        let b = Workers::new(4).map(1000, f);
        assert_eq!(a, b);
    }
}
