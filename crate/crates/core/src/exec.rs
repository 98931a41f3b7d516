//! Replica executor: a rayon pool, or a plain loop.
//!
//! Results never depend on which one runs; every replica owns its stream and
//! reductions happen afterwards in index order.

use crate::error::Result;

#[derive(Clone)]
pub struct Executor {
    workers: usize,
    #[cfg(feature = "parallel")]
    pool: Option<std::sync::Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor").field("workers", &self.workers).finish()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::sequential()
    }
}

impl Executor {
    pub fn sequential() -> Self {
        Executor {
            workers: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// `workers == 0` means one per available core.
    #[cfg(feature = "parallel")]
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 1 {
            return Ok(Self::sequential());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| crate::error::Error::Input(format!("cannot start worker pool: {e}")))?;
        Ok(Executor {
            workers: pool.current_num_threads(),
            pool: Some(std::sync::Arc::new(pool)),
        })
    }

    #[cfg(not(feature = "parallel"))]
    pub fn new(workers: usize) -> Result<Self> {
        if workers > 1 {
            log::warn!("built without the `parallel` feature; running {workers} workers sequentially");
        }
        Ok(Self::sequential())
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// `f(i)` for `i in 0..n`, collected in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }

    /// `f(i, &mut items[i])` for every item, results in index order.
    pub fn map_mut<T, U, F>(&self, items: &mut [T], f: F) -> Vec<U>
    where
        T: Send,
        U: Send,
        F: Fn(usize, &mut T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| {
                items
                    .par_iter_mut()
                    .enumerate()
                    .map(|(i, t)| f(i, t))
                    .collect()
            });
        }
        items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        for w in [1, 3] {
            let e = Executor::new(w).unwrap();
            assert_eq!(e.map(5, |i| i * i), vec![0, 1, 4, 9, 16]);
            let mut v = vec![1, 2, 3];
            let out = e.map_mut(&mut v, |i, x| {
                *x += i;
                *x
            });
            assert_eq!(out, vec![1, 3, 5]);
        }
    }
}
