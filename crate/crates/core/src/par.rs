//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper preserves input order in its output, so results are identical
//! regardless of the execution mode or thread count.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
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
    /// `Parallel` degrades to `Sequential` when the crate is built without rayon.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Ordered map over a slice.
pub fn map<T, U, F>(exec: Execution, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Ordered map over `0..n`.
pub fn map_range<U, F>(exec: Execution, n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Sum of per-item count vectors of length `width`. Integer sums are associative,
/// so the parallel result is exact.
pub fn count<T, F>(exec: Execution, items: &[T], width: usize, f: F) -> Vec<u64>
where
    T: Sync,
    F: Fn(&T, &mut [u64]) + Sync + Send,
{
    let fold = |mut acc: Vec<u64>, item: &T| {
        f(item, &mut acc);
        acc
    };
    let merge = |mut a: Vec<u64>, b: Vec<u64>| {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        a
    };
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items
            .par_iter()
            .fold(|| vec![0; width], fold)
            .reduce(|| vec![0; width], merge);
    }
    let _ = (exec, merge);
    items.iter().fold(vec![0; width], fold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map(Execution::Sequential, &xs, |x| x * 3);
        let b = map(Execution::Parallel, &xs, |x| x * 3);
        assert_eq!(a, b);
        let c = count(Execution::Sequential, &xs, 2, |x, acc| acc[(*x % 2) as usize] += 1);
        let d = count(Execution::Parallel, &xs, 2, |x, acc| acc[(*x % 2) as usize] += 1);
        assert_eq!(c, vec![500, 500]);
        assert_eq!(c, d);
        assert_eq!(map_range(Execution::Parallel, 5, |i| i), vec![0, 1, 2, 3, 4]);
    }
}
