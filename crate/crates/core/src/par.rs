//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature disabled every policy runs sequentially.
//! Results are always returned in input order, so output never depends on
//! the policy chosen.

/// Execution policy for data-parallel inner loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Order-preserving map over a slice.
pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Run two closures, concurrently when allowed.
pub fn join<A, B, RA, RB>(exec: Exec, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return rayon::join(a, b);
    }
    let _ = exec;
    (a(), b())
}
