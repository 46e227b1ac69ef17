//! Deterministic summation and parallel-reduction helpers.
//!
//! Every Monte Carlo estimator in this crate reports numbers that must not
//! depend on how work is scheduled.  The contract has two parts:
//!
//! 1. per-item work (one path, one probe point) is a pure function of the
//!    item index and a master seed, and
//! 2. reductions walk the items in a fixed order: indices are grouped into
//!    fixed-size chunks, chunks are folded sequentially on whatever worker
//!    picks them up, and the chunk results are merged in chunk order.
//!
//! With both parts in place the result is bitwise identical for any number
//! of rayon worker threads.

use rayon::prelude::*;

use crate::error::Result;

/// Chunk length used by [`par_fold_chunks`] callers in this crate.
///
/// Large enough to amortize scheduling, small enough to keep all workers
/// busy at the sample sizes the estimators use.
pub const DEFAULT_CHUNK: usize = 512;

/// Folds `0..n` into an accumulator in parallel with a deterministic result.
///
/// `make` creates an empty accumulator, `step` folds one item into it, and
/// `merge` combines two accumulators.  Items are processed in fixed chunks
/// of `chunk` indices; chunk accumulators are merged in chunk order, so the
/// result does not depend on the worker count.  The first error returned by
/// `step` aborts the fold.
pub fn par_fold_chunks<A, M, S, G>(n: usize, chunk: usize, make: M, step: S, merge: G) -> Result<A>
where
    A: Send,
    M: Fn() -> A + Sync,
    S: Fn(&mut A, usize) -> Result<()> + Sync,
    G: Fn(&mut A, A),
{
    assert!(chunk > 0, "chunk size must be positive");
    let starts: Vec<usize> = (0..n).step_by(chunk).collect();
    let partials: Result<Vec<A>> = starts
        .par_iter()
        .map(|&start| {
            let mut acc = make();
            for i in start..(start + chunk).min(n) {
                step(&mut acc, i)?;
            }
            Ok(acc)
        })
        .collect();
    let mut partials = partials?;
    let mut out = make();
    for acc in partials.drain(..) {
        merge(&mut out, acc);
    }
    Ok(out)
}

/// Sums a slice by pairwise (cascade) summation.
///
/// Error grows like O(log n) in the term count instead of O(n) for a naive
/// left-to-right loop, and the result is a fixed function of the slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 32;
    if xs.len() <= BASE {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Running sums for a scalar sample: count, `sum x`, `sum x^2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    /// Folds one observation in.
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    /// Merges another accumulator (fixed order is the caller's business).
    pub fn merge(&mut self, other: Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    /// Sample mean.
    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Standard error of the mean (unbiased sample variance over n).
    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let var = (self.sum_sq - self.sum * self.sum / n) / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    }
}

/// Mean and standard error of a slice (pairwise sums).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let centered: Vec<f64> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&centered) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Determinant by LU factorisation with partial pivoting.
pub fn determinant(a: &ndarray::Array2<f64>) -> f64 {
    let d = a.nrows();
    assert_eq!(d, a.ncols(), "determinant needs a square matrix");
    if d == 1 {
        return a[(0, 0)];
    }
    if d == 2 {
        return a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    }
    let mut m = a.clone();
    let mut det = 1.0;
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .unwrap();
        if m[(pivot, col)] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..d {
                m.swap((pivot, k), (col, k));
            }
            det = -det;
        }
        det *= m[(col, col)];
        for row in col + 1..d {
            let factor = m[(row, col)] / m[(col, col)];
            for k in col..d {
                m[(row, k)] -= factor * m[(col, k)];
            }
        }
    }
    det
}
