//! Element-loop dispatch.
//!
//! Every per-element computation in the crate goes through [`map`] or
//! [`try_map`]. With the `parallel` feature enabled the loops run on the rayon
//! pool unless the process-wide mode has been switched to
//! [`Execution::Sequential`]. Results are always collected in element order,
//! so any reduction performed afterwards is bit-identical in both modes.

use std::sync::atomic::{AtomicU8, Ordering};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

const SEQUENTIAL: u8 = 0;
const PARALLEL: u8 = 1;

static MODE: AtomicU8 = AtomicU8::new(if cfg!(feature = "parallel") {
    PARALLEL
} else {
    SEQUENTIAL
});

/// Select how element loops are executed. Requesting `Parallel` without the
/// `parallel` feature silently falls back to sequential execution.
pub fn set_execution(mode: Execution) {
    let raw = match mode {
        Execution::Sequential => SEQUENTIAL,
        Execution::Parallel if cfg!(feature = "parallel") => PARALLEL,
        Execution::Parallel => SEQUENTIAL,
    };
    MODE.store(raw, Ordering::Relaxed);
}

pub fn execution() -> Execution {
    match MODE.load(Ordering::Relaxed) {
        PARALLEL => Execution::Parallel,
        _ => Execution::Sequential,
    }
}

/// Evaluate `f(0..n)` and collect the results in index order.
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if execution() == Execution::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Fallible variant of [`map`]. The error reported is the one with the lowest
/// index, independent of the execution mode.
pub fn try_map<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map(n, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn map_preserves_order() {
        let v = map(100, |i| i * i);
        assert_eq!(v[7], 49);
        assert_eq!(v.len(), 100);
    }

    #[test]
    fn try_map_reports_first_error() {
        let r: Result<Vec<usize>> = try_map(10, |i| {
            if i >= 3 {
                Err(Error::Config(format!("{i}")))
            } else {
                Ok(i)
            }
        });
        match r {
            Err(Error::Config(s)) => assert_eq!(s, "3"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
