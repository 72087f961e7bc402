//! Data-parallel helpers. With the `parallel` feature these fan out over
//! rayon's pool; without it every helper runs the same closure sequentially.

/// Execution strategy for the bulk loops (slot scans, bulk zeroing,
/// model-checker frontiers).
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

/// Maps `f` over `0..n` in blocks of `block` indices and concatenates the
/// per-block outputs in index order.
pub fn map_blocks<T, F>(exec: Exec, n: usize, block: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> Vec<T> + Sync + Send,
{
    let block = block.max(1);
    let nblocks = n.div_ceil(block);
    let range = move |b: usize| b * block..((b + 1) * block).min(n);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..nblocks)
            .into_par_iter()
            .map(|b| f(range(b)))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect();
    }
    let _ = exec;
    (0..nblocks).flat_map(|b| f(range(b))).collect()
}

/// Runs `f` on every item, possibly in parallel, collecting results in order.
pub fn map_items<I, T, F>(exec: Exec, items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Applies `f` to disjoint `chunk`-sized pieces of `buf` together with each
/// piece's starting index.
pub fn for_each_chunk_mut<F>(exec: Exec, buf: &mut [u8], chunk: usize, f: F)
where
    F: Fn(usize, &mut [u8]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        buf.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i * chunk, c));
        return;
    }
    let _ = exec;
    buf.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i * chunk, c));
}
