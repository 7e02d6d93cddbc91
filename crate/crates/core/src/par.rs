//! Data-parallel helpers.
//!
//! With the `parallel` feature (on by default) the row-wise kernels and the
//! batch drivers fan out over a rayon pool. Without it, or when
//! [`Parallelism::Sequential`] is requested, everything runs on the calling
//! thread. Work is only ever split into independent items whose results are
//! written to fixed slots, so both modes produce bit-identical output.

/// Execution mode for data-parallel loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parallelism {
    Sequential,
    /// Falls back to sequential execution when built without `parallel`.
    Rayon,
}

impl Default for Parallelism {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Parallelism::Rayon
        } else {
            Parallelism::Sequential
        }
    }
}

impl Parallelism {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Rayon
    }
}

/// Applies `f(row_index, row)` to every `width`-sized chunk of `data`.
pub fn for_each_row<F>(mode: Parallelism, data: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = mode;
    data.chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, U, F>(mode: Parallelism, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}
