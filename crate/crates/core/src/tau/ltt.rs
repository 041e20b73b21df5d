//! Solves with shifted lower-triangular Toeplitz matrices `T + shift I`.

use realfft::RealFftPlanner;

use crate::error::{check_len, Error, Result};
use crate::operators::{Circulant, TemporalOperator};

/// Solves `(T + shift I) x = rhs` by forward substitution.
///
/// `shift` must be positive; it is the tau eigenvalue of one spatial
/// frequency and can only be non-positive if the upstream data is corrupt.
pub fn block_lower_toeplitz_solve(
    temporal: &TemporalOperator,
    shift: f64,
    rhs: &[f64],
) -> Result<Vec<f64>> {
    check_shift(shift)?;
    check_len(temporal.len(), rhs.len())?;
    let reversed = reversed_column(temporal.column());
    let mut x = rhs.to_vec();
    forward_substitute(&reversed, temporal.diagonal() + shift, &mut x);
    Ok(x)
}

/// Same solve through the explicit inverse: the inverse of a lower-triangular
/// Toeplitz matrix is lower-triangular Toeplitz, and its first column is the
/// reciprocal power series of the first column of `T + shift I`, computed by
/// Newton doubling with FFT products.
pub fn block_lower_toeplitz_solve_fast(
    temporal: &TemporalOperator,
    shift: f64,
    rhs: &[f64],
) -> Result<Vec<f64>> {
    check_shift(shift)?;
    check_len(temporal.len(), rhs.len())?;
    let mut planner = RealFftPlanner::new();
    let inverse = inverse_column(temporal.column(), shift, &mut planner);
    Ok(truncated_product(&inverse, rhs, rhs.len(), &mut planner))
}

fn check_shift(shift: f64) -> Result<()> {
    if shift > 0.0 && shift.is_finite() {
        Ok(())
    } else {
        Err(Error::param("shift", format!("{shift} is not positive")))
    }
}

/// `[l_{N-1}, ..., l_1, l_0]`.
pub(crate) fn reversed_column(column: &[f64]) -> Vec<f64> {
    column.iter().rev().copied().collect()
}

/// In place: on entry `x` is the right-hand side, on exit the solution of
/// the lower-triangular Toeplitz system with first column
/// `(diagonal, l_1, ..., l_{N-1})`, where `reversed` is the reversed column.
///
/// Row `n` needs `sum_{k<n} l_{n-k} x_k`, a dot product of `x[..n]` with the
/// contiguous slice `reversed[N-1-n..N-1]`. The accumulation order is fixed,
/// so results are bitwise reproducible.
pub(crate) fn forward_substitute(reversed: &[f64], diagonal: f64, x: &mut [f64]) {
    let n_total = x.len();
    debug_assert_eq!(reversed.len(), n_total);
    let inv = 1.0 / diagonal;
    for n in 0..n_total {
        let (done, rest) = x.split_at_mut(n);
        let coeffs = &reversed[n_total - 1 - n..n_total - 1];
        rest[0] = (rest[0] - dot(done, coeffs)) * inv;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

const DIRECT_PRODUCT_BELOW: usize = 64;

/// First `n` coefficients of the product of the series `a` and `b`.
fn truncated_product(a: &[f64], b: &[f64], n: usize, planner: &mut RealFftPlanner<f64>) -> Vec<f64> {
    let a = &a[..a.len().min(n)];
    let b = &b[..b.len().min(n)];
    let mut out = vec![0.0; n];
    if a.len().min(b.len()) < DIRECT_PRODUCT_BELOW {
        for (i, &ai) in a.iter().enumerate() {
            for (j, &bj) in b.iter().enumerate().take(n - i) {
                out[i + j] += ai * bj;
            }
        }
        return out;
    }
    let len = (a.len() + b.len()).next_power_of_two();
    let mut embedded = a.to_vec();
    embedded.resize(len, 0.0);
    let circ = Circulant::with_planner(embedded, planner);
    let mut s = circ.scratch();
    let take = n.min(len);
    circ.apply(b, &mut out[..take], &mut s);
    out
}

/// First column of `(T + shift I)^{-1}`.
pub(crate) fn inverse_column(column: &[f64], shift: f64, planner: &mut RealFftPlanner<f64>) -> Vec<f64> {
    let n = column.len();
    let mut f = column.to_vec();
    f[0] += shift;
    let mut g = vec![1.0 / f[0]];
    let mut k = 1;
    while k < n {
        let k2 = (2 * k).min(n);
        // g <- g (2 - f g)  mod z^k2
        let mut e = truncated_product(&f[..k2], &g, k2, planner);
        for x in e.iter_mut() {
            *x = -*x;
        }
        e[0] += 2.0;
        g = truncated_product(&g, &e, k2, planner);
        k = k2;
    }
    g
}

#[cfg(test)]
fn lower_apply(column: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    crate::operators::lower_toeplitz_direct(column, x, &mut y);
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::l1_weights;

    fn temporal(alpha: f64, n: usize) -> TemporalOperator {
        TemporalOperator::from_weights(&l1_weights(alpha, n, 1.0 / n as f64).unwrap()).unwrap()
    }

    fn rhs(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 37 + 11) % 17) as f64 / 17.0 - 0.4).collect()
    }

    #[test]
    fn single_level() {
        let t = TemporalOperator::new(vec![3.0]).unwrap();
        let x = block_lower_toeplitz_solve(&t, 1.0, &[2.0]).unwrap();
        assert_eq!(x, vec![0.5]);
    }

    #[test]
    fn round_trip_recovers_solution() {
        let n = 64;
        let t = temporal(0.7, n);
        let shift = 13.5;
        let x_true = rhs(n);
        let mut b = t.apply(&x_true).unwrap();
        for (bi, xi) in b.iter_mut().zip(&x_true) {
            *bi += shift * xi;
        }
        let x = block_lower_toeplitz_solve(&t, shift, &b).unwrap();
        let err = x.iter().zip(&x_true).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-12, "{err:e}");
    }

    #[test]
    fn rejects_nonpositive_shift() {
        let t = temporal(0.5, 4);
        assert!(block_lower_toeplitz_solve(&t, 0.0, &[1.0; 4]).is_err());
        assert!(block_lower_toeplitz_solve(&t, -2.0, &[1.0; 4]).is_err());
        assert!(block_lower_toeplitz_solve_fast(&t, 0.0, &[1.0; 4]).is_err());
        assert!(block_lower_toeplitz_solve(&t, 1.0, &[1.0; 3]).is_err());
    }

    #[test]
    fn inverse_column_inverts() {
        let n = 200;
        let t = temporal(0.3, n);
        let mut planner = RealFftPlanner::new();
        let g = inverse_column(t.column(), 2.0, &mut planner);
        let mut shifted = t.column().to_vec();
        shifted[0] += 2.0;
        let e = lower_apply(&shifted, &g);
        assert!((e[0] - 1.0).abs() < 1e-14);
        assert!(e[1..].iter().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn fast_path_agrees_with_substitution() {
        for (alpha, n, shift) in [(0.1, 7, 0.5), (0.5, 128, 4.0), (0.9, 300, 1e3), (0.9, 256, 1e-3)] {
            let t = temporal(alpha, n);
            let b = rhs(n);
            let slow = block_lower_toeplitz_solve(&t, shift, &b).unwrap();
            let fast = block_lower_toeplitz_solve_fast(&t, shift, &b).unwrap();
            let scale = slow.iter().map(|x| x.abs()).fold(0.0, f64::max);
            let err = slow.iter().zip(&fast).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-11 * scale, "alpha {alpha} n {n} shift {shift}: {err:e}");
        }
    }
}
