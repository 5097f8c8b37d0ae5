//! Chunked map/reduce over trajectories.
//!
//! Work is always split into chunks of a fixed width, independent of the
//! number of worker threads, and partial results are combined in chunk
//! order. Outputs are therefore bit-identical between the sequential and
//! the parallel path and across pool sizes.

/// Trajectories processed together in one batch.
pub const CHUNK: usize = 32;

/// How trajectory chunks are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Parallel when the `parallel` feature is enabled, sequential otherwise.
    #[default]
    Auto,
    Sequential,
    Parallel,
}

impl Execution {
    fn parallel(self) -> bool {
        match self {
            Execution::Sequential => false,
            Execution::Auto | Execution::Parallel => cfg!(feature = "parallel"),
        }
    }
}

/// Applies `f` to consecutive index ranges of width [`CHUNK`] covering
/// `0..n` and returns the results in range order.
pub fn map_chunks<R, F>(n: usize, exec: Execution, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> R + Sync + Send,
{
    let ranges: Vec<_> = (0..n.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(n))
        .collect();
    if exec.parallel() {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            return ranges.into_par_iter().map(f).collect();
        }
    }
    ranges.into_iter().map(f).collect()
}

/// Pairwise (tree) combination of partial results in their given order.
pub fn tree_reduce<T, F>(mut parts: Vec<T>, combine: F) -> Option<T>
where
    F: Fn(T, T) -> T,
{
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop()
}
