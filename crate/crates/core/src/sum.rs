//! Deterministic reductions.
//!
//! Parallel sums split the index range into fixed-size chunks and combine the
//! chunk totals pairwise, so the result is independent of the thread count.

use rayon::prelude::*;

const CHUNK: usize = 4096;

/// Pairwise (cascade) summation of a slice.
pub fn pairwise(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise(&values[..mid]) + pairwise(&values[mid..])
}

/// `Σ_{i<len} f(i)` evaluated in parallel with a thread-count independent
/// reduction order.
pub fn par_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = len.div_ceil(CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(len);
            let local: Vec<f64> = (lo..hi).map(&f).collect();
            pairwise(&local)
        })
        .collect();
    pairwise(&partial)
}

/// Mean of `f(i)` over `0..len`.
pub fn par_mean<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    par_sum(len, f) / len as f64
}

/// Maximum of `f(i)` over `0..len` (0 for an empty range).
pub fn par_max<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    (0..len).into_par_iter().map(&f).reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_exact_integer_sum() {
        let v: Vec<f64> = (1..=10_000).map(|i| i as f64).collect();
        assert_eq!(pairwise(&v), 50_005_000.0);
        assert_eq!(par_sum(v.len(), |i| v[i]), 50_005_000.0);
    }
}
