//! Rayon-backed [`Executor`].

use perphase_core::Executor;
use rayon::prelude::*;

/// Worker-count override. Results never depend on it.
pub const WORKERS_ENV: &str = "PERPHASE_WORKERS";

pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    /// `workers = 0` lets rayon pick.
    pub fn new(workers: usize) -> anyhow::Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()?;
        Ok(Self { pool })
    }

    pub fn from_env() -> anyhow::Result<Self> {
        let workers = match std::env::var(WORKERS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                anyhow::anyhow!("{WORKERS_ENV} must be a non-negative integer, got `{v}`")
            })?,
            Err(_) => 0,
        };
        Self::new(workers)
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Pool {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        // indexed collect keeps index order whatever the scheduling
        self.pool
            .install(|| (0..n).into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_workers() {
        let a = Pool::new(1).unwrap().map_indexed(1000, |i| i * i);
        let b = Pool::new(4).unwrap().map_indexed(1000, |i| i * i);
        assert_eq!(a, b);
        assert_eq!(a[999], 999 * 999);
    }
}
