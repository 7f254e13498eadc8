//! Thin wrappers over rayon with a sequential fallback.
//!
//! Every parallel pattern used in this crate assigns each task a disjoint
//! output region and keeps all floating-point reductions sequential inside
//! the task, so results are bit-identical to sequential execution no matter
//! how work is scheduled.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Run `f(chunk_index, chunk)` over disjoint chunks of `data`.
#[cfg(feature = "parallel")]
pub(crate) fn for_each_chunk_mut<S: Send, F: Fn(usize, &mut [S]) + Sync>(
    data: &mut [S],
    chunk: usize,
    min_chunks_per_task: usize,
    f: F,
) {
    data.par_chunks_mut(chunk)
        .with_min_len(min_chunks_per_task.max(1))
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_chunk_mut<S, F: Fn(usize, &mut [S])>(
    data: &mut [S],
    chunk: usize,
    _min_chunks_per_task: usize,
    f: F,
) {
    for (i, c) in data.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}

/// Ordered map over `0..n`. `parallel` is a runtime switch so callers can
/// compare concurrent and sequential execution in the same build.
#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<R: Send, F: Fn(usize) -> R + Sync>(
    n: usize,
    parallel: bool,
    f: F,
) -> Vec<R> {
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<R, F: Fn(usize) -> R>(n: usize, _parallel: bool, f: F) -> Vec<R> {
    (0..n).map(f).collect()
}

/// Elementwise optimizer-style update over four equally long slices,
/// chunked for parallelism. `f` receives aligned chunks of
/// (param, first moment, second moment, grad).
#[cfg(feature = "parallel")]
pub(crate) fn zip4_chunks_mut<S: Send + Sync, F>(
    p: &mut [S],
    m: &mut [S],
    v: &mut [S],
    g: &[S],
    chunk: usize,
    f: F,
) where
    F: Fn(&mut [S], &mut [S], &mut [S], &[S]) + Sync,
{
    p.par_chunks_mut(chunk)
        .zip(m.par_chunks_mut(chunk))
        .zip(v.par_chunks_mut(chunk))
        .zip(g.par_chunks(chunk))
        .for_each(|(((pc, mc), vc), gc)| f(pc, mc, vc, gc));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn zip4_chunks_mut<S, F>(
    p: &mut [S],
    m: &mut [S],
    v: &mut [S],
    g: &[S],
    chunk: usize,
    f: F,
) where
    F: Fn(&mut [S], &mut [S], &mut [S], &[S]),
{
    for (((pc, mc), vc), gc) in p
        .chunks_mut(chunk)
        .zip(m.chunks_mut(chunk))
        .zip(v.chunks_mut(chunk))
        .zip(g.chunks(chunk))
    {
        f(pc, mc, vc, gc);
    }
}
