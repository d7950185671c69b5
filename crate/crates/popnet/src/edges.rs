//! Indexing helpers for unordered node pairs.
//!
//! Edges (k, l) with k < l are stored in row-major upper-triangle order:
//! (0,1), (0,2), ..., (0,p-1), (1,2), ...

/// Number of unordered pairs among `p` nodes.
pub fn pair_count(p: usize) -> usize {
    p * (p - 1) / 2
}

/// Linear index of pair (k, l), k < l.
pub fn pair_index(k: usize, l: usize, p: usize) -> usize {
    debug_assert!(k < l && l < p);
    k * p - k * (k + 1) / 2 + (l - k - 1)
}

/// All pairs in linear order.
pub fn pairs(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p).flat_map(move |k| (k + 1..p).map(move |l| (k, l)))
}
