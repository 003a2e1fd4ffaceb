//! Path-level data parallelism. With the `parallel` feature the ensemble is
//! mapped on the rayon pool; without it (or with [`Execution::Sequential`])
//! paths run in order on the calling thread. Results are always returned in
//! input order, so both modes produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `true` when [`Execution::Parallel`] actually fans out.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

pub fn current_num_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Maps `f` over `ids`, preserving order.
pub fn map_paths<T, F>(exec: Execution, ids: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => ids.par_iter().map(|&id| f(id)).collect(),
        _ => ids.iter().map(|&id| f(id)).collect(),
    }
}
