//! Vector layout of the all-at-once unknowns.
//!
//! A space-time vector of length `N * J` stores the spatial multi-index
//! `(j_1, ..., j_d)` in lexicographic order with the last direction fastest,
//! and the time level innermost:
//!
//! ```text
//! index = ((j_1 * m_2 + j_2) * m_3 + j_3) * N + n
//! ```
//!
//! This is the ordering forced by the Kronecker products `B ⊗ I_N` and
//! `I_J ⊗ T`. Viewed as a row-major tensor of shape `(m_1, ..., m_d, N)`,
//! an operator acting along spatial direction `i` sees lines of length
//! `m_i` with stride `inner = m_{i+1} * ... * m_d * N`.

use rayon::prelude::*;

/// `(len, inner)` of the lines along `axis` of a row-major tensor with the
/// given `shape` (the trailing time axis included in `shape` by the caller).
pub(crate) fn axis_geometry(shape: &[usize], axis: usize) -> (usize, usize) {
    (shape[axis], shape[axis + 1..].iter().product())
}

const TILE: usize = 32;

/// `dst[c * rows + r] = src[r * cols + c]`.
pub(crate) fn transpose(src: &[f64], rows: usize, cols: usize, dst: &mut [f64]) {
    debug_assert_eq!(src.len(), rows * cols);
    debug_assert_eq!(dst.len(), rows * cols);
    for r0 in (0..rows).step_by(TILE) {
        let r1 = (r0 + TILE).min(rows);
        for c0 in (0..cols).step_by(TILE) {
            let c1 = (c0 + TILE).min(cols);
            for r in r0..r1 {
                let row = &src[r * cols..(r + 1) * cols];
                for c in c0..c1 {
                    dst[c * rows + r] = row[c];
                }
            }
        }
    }
}

/// Calls `f` on every line of length `len` of the `(outer, len, inner)`
/// row-major array `data`, in place. Lines are handed out contiguous; when
/// `inner > 1` each outer block is transposed into a scratch buffer first.
///
/// `init` builds per-worker scratch state. The result does not depend on how
/// lines are distributed over threads.
pub(crate) fn for_each_line<S, I, F>(data: &mut [f64], len: usize, inner: usize, init: I, f: F)
where
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &mut [f64]) + Sync + Send,
{
    let block = len * inner;
    debug_assert_eq!(data.len() % block, 0);
    if inner == 1 {
        data.par_chunks_mut(len).for_each_init(&init, |s, line| f(s, line));
        return;
    }
    data.par_chunks_mut(block).for_each(|outer| {
        let mut lines = vec![0.0; block];
        transpose(outer, len, inner, &mut lines);
        lines
            .par_chunks_mut(len)
            .for_each_init(&init, |s, line| f(s, line));
        transpose(&lines, inner, len, outer);
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_round_trip() {
        let (rows, cols) = (37, 70);
        let src: Vec<f64> = (0..rows * cols).map(|i| i as f64).collect();
        let mut t = vec![0.0; rows * cols];
        transpose(&src, rows, cols, &mut t);
        assert_eq!(t[5 * rows + 3], src[3 * cols + 5]);
        let mut back = vec![0.0; rows * cols];
        transpose(&t, cols, rows, &mut back);
        assert_eq!(back, src);
    }

    #[test]
    fn lines_visit_strided_elements() {
        // shape (2, 3, 4): reverse each line along the middle axis.
        let mut data: Vec<f64> = (0..24).map(|i| i as f64).collect();
        for_each_line(&mut data, 3, 4, || (), |_, line| line.reverse());
        for o in 0..2 {
            for k in 0..3 {
                for c in 0..4 {
                    let want = (o * 12 + (2 - k) * 4 + c) as f64;
                    assert_eq!(data[o * 12 + k * 4 + c], want);
                }
            }
        }
    }
}
