//! Order-preserving data-parallel helpers.
//!
//! All helpers produce results in index order. Floating-point reductions are done
//! by the caller over the returned vector, never inside the thread pool, so sums do
//! not depend on how work was split. Inputs below 2^14 voxels run on the
//! calling thread.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Voxel count below which the helpers stay on the calling thread.
#[cfg(feature = "parallel")]
const MIN_PARALLEL_VOXELS: usize = 1 << 14;

#[cfg(feature = "parallel")]
const MIN_PARALLEL_ITEMS: usize = 256;

/// Maps `f` over `0..n` and collects the results in order. `grain` is the
/// number of voxels one call to `f` touches.
#[cfg(feature = "parallel")]
pub(crate) fn map_range<R, F>(n: usize, grain: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    if n.saturating_mul(grain) < MIN_PARALLEL_VOXELS {
        return (0..n).map(f).collect();
    }
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_range<R, F>(n: usize, _grain: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Maps `f` over every element of `items` and collects the results in order.
#[cfg(feature = "parallel")]
pub(crate) fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if items.len() < MIN_PARALLEL_ITEMS {
        return items.iter().map(f).collect();
    }
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Fills `out` slice by slice; `f` receives the slice number and its mutable chunk.
#[cfg(feature = "parallel")]
pub(crate) fn fill_chunks<T, F>(out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if out.len() < MIN_PARALLEL_VOXELS {
        out.chunks_mut(chunk.max(1))
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    out.par_chunks_mut(chunk.max(1))
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn fill_chunks<T, F>(out: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]),
{
    out.chunks_mut(chunk.max(1))
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}
