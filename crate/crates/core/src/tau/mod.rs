//! The tau preconditioners.
//!
//! `B_tau = S diag(lambda) S` replaces `B`, where `S` is the tensor product of
//! the orthonormal sine transforms and `lambda` is the scaled sum of the
//! per-direction eigenvalues of `tau(W_{m_i})`. With it
//!
//! ```text
//! P   = I_J ⊗ T + B_tau ⊗ I_N
//! P_l = B_tau^{-1/2} ⊗ T + B_tau^{1/2} ⊗ I_N
//! P_r = B_tau^{1/2} ⊗ I_N
//! ```
//!
//! and every inverse reduces to a sine transform over space, `J` independent
//! shifted lower-triangular Toeplitz solves in time, and a second transform.

mod dst;
mod ltt;

use std::f64::consts::PI;

use rayon::prelude::*;
use realfft::RealFftPlanner;

pub use dst::{sine_matrix_entry, DstScratch, SineTransformPlan};
pub use ltt::{block_lower_toeplitz_solve, block_lower_toeplitz_solve_fast};

use crate::discretization::{ProblemSpec, SpatialWeights};
use crate::error::{check_len, Error, Result};
use crate::layout::{axis_geometry, for_each_line};
use crate::operators::{Circulant, TemporalOperator};

/// The default scaling `sqrt(3)/2` of `B_tau`.
pub const DEFAULT_ETA: f64 = 0.866_025_403_784_438_6;

/// Eigenvalues `q_1, ..., q_m` of `tau(W_m)` by the cosine sum
/// `q_i = w_0 + 2 sum_{j=1}^{m-1} w_j cos(pi i j / (m+1))`.
pub fn tau_eigenvalues(w: &[f64], m: usize) -> Result<Vec<f64>> {
    check_weights(w, m)?;
    let period = 2 * (m + 1);
    let q = (1..=m)
        .map(|i| {
            let tail: f64 = (1..m)
                .map(|j| {
                    let r = (i * j) % period;
                    w[j] * (PI * r as f64 / (m + 1) as f64).cos()
                })
                .sum();
            w[0] + 2.0 * tail
        })
        .collect();
    Ok(q)
}

/// Same eigenvalues through two sine transforms: `q = (S tau(W) e_1) / (S e_1)`.
pub fn tau_eigenvalues_fst(w: &[f64], m: usize) -> Result<Vec<f64>> {
    check_weights(w, m)?;
    let plan = SineTransformPlan::new(m)?;
    let image = plan.dst(&tau_first_column(&w[..m]))?;
    Ok((0..m)
        .map(|k| image[k] / sine_matrix_entry(m, k + 1, 1))
        .collect())
}

fn check_weights(w: &[f64], m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::param("m", "need at least one point"));
    }
    if w.len() < m {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: w.len(),
        });
    }
    Ok(())
}

/// First column of `tau(W_m)`: `(w_0 - w_2, ..., w_{m-3} - w_{m-1}, w_{m-2}, w_{m-1})`.
fn tau_first_column(w: &[f64]) -> Vec<f64> {
    let m = w.len();
    (0..m)
        .map(|k| if k + 2 < m { w[k] - w[k + 2] } else { w[k] })
        .collect()
}

/// How the shifted lower-triangular Toeplitz blocks are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlockSolver {
    /// O(N^2) forward substitution per block.
    #[default]
    ForwardSubstitution,
    /// Precomputed inverse columns applied by FFT; O(N log N) per block at
    /// the cost of one spectrum of length `N + 1` per spatial frequency.
    FastInversion,
}

/// The single- and two-sided tau preconditioners for one problem.
///
/// Immutable after [`TauPreconditioner::build`]; every apply allocates its
/// own scratch, so one instance can serve concurrent callers.
pub struct TauPreconditioner {
    dims: Vec<usize>,
    eta_factor: f64,
    axis_eta: Vec<f64>,
    axis_eigenvalues: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    sqrt_lambda: Vec<f64>,
    inv_sqrt_lambda: Vec<f64>,
    temporal: TemporalOperator,
    reversed: Vec<f64>,
    plans: Vec<SineTransformPlan>,
    inverses: Option<Vec<Circulant>>,
}

impl TauPreconditioner {
    /// Builds the preconditioner with `B_tau` scaled by `eta` (the default
    /// being [`DEFAULT_ETA`]).
    pub fn build(
        spec: &ProblemSpec,
        weights: &[SpatialWeights],
        temporal: &TemporalOperator,
        eta: f64,
    ) -> Result<Self> {
        Self::build_with(spec, weights, temporal, eta, BlockSolver::default())
    }

    pub fn from_spec(spec: &ProblemSpec) -> Result<Self> {
        let temporal = TemporalOperator::from_weights(&spec.temporal_weights()?)?;
        Self::build(spec, &spec.spatial_weights()?, &temporal, DEFAULT_ETA)
    }

    pub fn build_with(
        spec: &ProblemSpec,
        weights: &[SpatialWeights],
        temporal: &TemporalOperator,
        eta: f64,
        solver: BlockSolver,
    ) -> Result<Self> {
        spec.validate()?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::param("eta", format!("{eta} is not positive")));
        }
        check_len(spec.dim(), weights.len())?;
        for (w, &m) in weights.iter().zip(&spec.interior) {
            check_len(m, w.len())?;
        }
        check_len(spec.n_time, temporal.len())?;

        let dims = spec.interior.clone();
        let axis_eta = spec.etas();
        let axis_eigenvalues = weights
            .iter()
            .map(|w| tau_eigenvalues_fst(&w.w, w.len()))
            .collect::<Result<Vec<_>>>()?;
        let lambda = eigenvalue_grid(&dims, &axis_eta, &axis_eigenvalues, eta);
        if let Some((index, &value)) = lambda
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
        {
            return Err(Error::NonPositiveEigenvalue { index, value });
        }
        let sqrt_lambda: Vec<f64> = lambda.iter().map(|x| x.sqrt()).collect();
        let inv_sqrt_lambda = sqrt_lambda.iter().map(|x| 1.0 / x).collect();
        let plans = dims
            .iter()
            .map(|&m| SineTransformPlan::new(m))
            .collect::<Result<Vec<_>>>()?;
        let inverses = match solver {
            BlockSolver::ForwardSubstitution => None,
            BlockSolver::FastInversion => Some(fast_inverses(temporal, &lambda)),
        };
        Ok(TauPreconditioner {
            dims,
            eta_factor: eta,
            axis_eta,
            axis_eigenvalues,
            lambda,
            sqrt_lambda,
            inv_sqrt_lambda,
            reversed: ltt::reversed_column(temporal.column()),
            temporal: temporal.clone(),
            plans,
            inverses,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_time(&self) -> usize {
        self.temporal.len()
    }

    pub fn num_spatial(&self) -> usize {
        self.lambda.len()
    }

    /// `N * J`.
    pub fn len(&self) -> usize {
        self.n_time() * self.num_spatial()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eta_factor(&self) -> f64 {
        self.eta_factor
    }

    /// Scaled diffusion coefficients `eta_i = c_i / h_i^beta_i`.
    pub fn axis_eta(&self) -> &[f64] {
        &self.axis_eta
    }

    /// Eigenvalues of `tau(W_{m_i})` for direction `axis`, in sine-mode order.
    pub fn axis_eigenvalues(&self, axis: usize) -> &[f64] {
        &self.axis_eigenvalues[axis]
    }

    /// Eigenvalues of `B_tau` in vector-layout order.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// `lambda_min(B_tau)`.
    pub fn lambda_min(&self) -> f64 {
        self.lambda.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn temporal(&self) -> &TemporalOperator {
        &self.temporal
    }

    pub fn sine_plans(&self) -> &[SineTransformPlan] {
        &self.plans
    }

    /// `P^{-1} v`.
    pub fn apply_p_inv(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.apply_p_inv_into(v, &mut out)?;
        Ok(out)
    }

    pub fn apply_p_inv_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        self.transformed(v, out, |s, block| self.solve_block(s, block, 1.0))
    }

    /// `P_l^{-1} v`. Per frequency the block is
    /// `lambda^{-1/2} T + lambda^{1/2} I = lambda^{-1/2} (T + lambda I)`.
    pub fn apply_pl_inv(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.apply_pl_inv_into(v, &mut out)?;
        Ok(out)
    }

    pub fn apply_pl_inv_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        self.transformed(v, out, |s, block| {
            self.solve_block(s, block, self.sqrt_lambda[s])
        })
    }

    /// `P_r v`.
    pub fn apply_pr(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.apply_pr_into(v, &mut out)?;
        Ok(out)
    }

    pub fn apply_pr_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        self.transformed(v, out, |s, block| scale(block, self.sqrt_lambda[s]))
    }

    /// `P_r^{-1} v`.
    pub fn apply_pr_inv(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.apply_pr_inv_into(v, &mut out)?;
        Ok(out)
    }

    pub fn apply_pr_inv_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        self.transformed(v, out, |s, block| scale(block, self.inv_sqrt_lambda[s]))
    }

    /// `out = (S ⊗ I_N) diag_s(f) (S ⊗ I_N) v`, with `f(s, block)` acting in
    /// place on the time block of spatial frequency `s`.
    fn transformed<F>(&self, v: &[f64], out: &mut [f64], f: F) -> Result<()>
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        check_len(self.len(), v.len())?;
        check_len(self.len(), out.len())?;
        let n = self.n_time();
        out.copy_from_slice(v);
        self.spatial_dst(out);
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(s, block)| f(s, block));
        self.spatial_dst(out);
        Ok(())
    }

    /// `data <- (S ⊗ I_N) data`.
    fn spatial_dst(&self, data: &mut [f64]) {
        let mut shape = self.dims.clone();
        shape.push(self.n_time());
        for (axis, plan) in self.plans.iter().enumerate() {
            if plan.size() == 1 {
                // S_1 = [1].
                continue;
            }
            let (len, inner) = axis_geometry(&shape, axis);
            for_each_line(
                data,
                len,
                inner,
                || plan.scratch(),
                |s, line| plan.apply_in_place(line, s),
            );
        }
    }

    /// In place: `block <- factor (T + lambda_s I)^{-1} block`.
    fn solve_block(&self, s: usize, block: &mut [f64], factor: f64) {
        match &self.inverses {
            None => {
                ltt::forward_substitute(&self.reversed, self.temporal.diagonal() + self.lambda[s], block)
            }
            Some(inv) => {
                let c = &inv[s];
                let mut scratch = c.scratch();
                let rhs = block.to_vec();
                c.apply(&rhs, block, &mut scratch);
            }
        }
        if factor != 1.0 {
            scale(block, factor);
        }
    }
}

fn scale(block: &mut [f64], factor: f64) {
    for x in block {
        *x *= factor;
    }
}

/// `lambda[s] = eta * sum_i eta_i q^(i)_{j_i}` over the multi-index of `s`.
fn eigenvalue_grid(dims: &[usize], axis_eta: &[f64], q: &[Vec<f64>], eta: f64) -> Vec<f64> {
    let mut grid = vec![0.0];
    for (axis, &m) in dims.iter().enumerate() {
        let mut next = Vec::with_capacity(grid.len() * m);
        for &g in &grid {
            for &qj in &q[axis] {
                next.push(g + axis_eta[axis] * qj);
            }
        }
        grid = next;
    }
    for x in &mut grid {
        *x *= eta;
    }
    grid
}

fn fast_inverses(temporal: &TemporalOperator, lambda: &[f64]) -> Vec<Circulant> {
    let n = temporal.len();
    let mut planner = RealFftPlanner::new();
    lambda
        .iter()
        .map(|&shift| {
            let mut column = ltt::inverse_column(temporal.column(), shift, &mut planner);
            column.resize((2 * n).next_power_of_two(), 0.0);
            Circulant::with_planner(column, &mut planner)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{spatial_weights, SpatialScheme};

    fn max_rel(a: &[f64], b: &[f64]) -> f64 {
        let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        num / b.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    fn sample(n: usize, seed: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (((i + seed) * 2654435761) % 1000) as f64 / 500.0 - 1.0)
            .collect()
    }

    fn setup(alpha: f64, n: usize, dims: &[usize]) -> (ProblemSpec, TauPreconditioner) {
        let beta: Vec<f64> = (0..dims.len()).map(|i| 1.3 + 0.2 * i as f64).collect();
        let spec = ProblemSpec::unit_box(alpha, &beta, n, dims, SpatialScheme::ShiftedGrunwald).unwrap();
        let p = TauPreconditioner::from_spec(&spec).unwrap();
        (spec, p)
    }

    #[test]
    fn tridiagonal_eigenvalues() {
        for m in [1, 2, 7, 20] {
            let mut w = vec![0.0; m];
            w[0] = 2.0;
            if m > 1 {
                w[1] = -1.0;
            }
            let q = tau_eigenvalues(&w, m).unwrap();
            let qf = tau_eigenvalues_fst(&w, m).unwrap();
            for i in 0..m {
                let want = 2.0 - 2.0 * (PI * (i + 1) as f64 / (m + 1) as f64).cos();
                assert!((q[i] - want).abs() < 1e-13);
                assert!((qf[i] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn both_eigenvalue_routes_agree() {
        for scheme in SpatialScheme::ALL {
            for m in [3, 16, 17, 100, 256] {
                let w = spatial_weights(scheme, 1.7, m).unwrap();
                let a = tau_eigenvalues(&w.w, m).unwrap();
                let b = tau_eigenvalues_fst(&w.w, m).unwrap();
                assert!(max_rel(&b, &a) < 1e-11, "{scheme} m {m}");
                assert!(a.iter().all(|&q| q > 0.0));
            }
        }
    }

    #[test]
    fn one_direction_grid() {
        let spec = ProblemSpec::unit_box(0.5, &[1.5], 3, &[2], SpatialScheme::CelikDuman).unwrap();
        let p = TauPreconditioner::from_spec(&spec).unwrap();
        let q = tau_eigenvalues(&spec.spatial_weights().unwrap()[0].w, 2).unwrap();
        for j in 0..2 {
            let want = DEFAULT_ETA * spec.eta(0) * q[j];
            assert!((p.lambda()[j] - want).abs() <= 1e-14 * want);
        }
    }

    #[test]
    fn eta_scaling_is_exact_factor() {
        let spec = ProblemSpec::unit_box(0.5, &[1.2, 1.8], 4, &[5, 6], SpatialScheme::WeightedShifted).unwrap();
        let t = TemporalOperator::from_weights(&spec.temporal_weights().unwrap()).unwrap();
        let w = spec.spatial_weights().unwrap();
        let a = TauPreconditioner::build(&spec, &w, &t, 0.5).unwrap();
        let b = TauPreconditioner::build(&spec, &w, &t, 2.0).unwrap();
        for (x, y) in a.lambda().iter().zip(b.lambda()) {
            assert!((4.0 * x - y).abs() <= 1e-14 * y);
        }
        assert!(TauPreconditioner::build(&spec, &w, &t, 0.0).is_err());
    }

    #[test]
    fn pr_pair_round_trips() {
        let (_, p) = setup(0.4, 5, &[6, 4]);
        let v = sample(p.len(), 3);
        let back = p.apply_pr_inv(&p.apply_pr(&v).unwrap()).unwrap();
        assert!(max_rel(&back, &v) < 1e-12);
    }

    #[test]
    fn two_sided_factors_compose_to_single_sided() {
        for (n, dims) in [(4, vec![4]), (8, vec![4, 4]), (6, vec![17, 3]), (4, vec![2, 2, 2])] {
            let (_, p) = setup(0.6, n, &dims);
            let v = sample(p.len(), 1);
            let two = p.apply_pl_inv(&p.apply_pr_inv(&v).unwrap()).unwrap();
            let one = p.apply_p_inv(&v).unwrap();
            assert!(max_rel(&two, &one) < 1e-11, "{dims:?}");
        }
    }

    #[test]
    fn fast_inversion_matches_substitution() {
        let spec = ProblemSpec::unit_box(0.3, &[1.4, 1.6], 70, &[5, 18], SpatialScheme::ShiftedGrunwald).unwrap();
        let t = TemporalOperator::from_weights(&spec.temporal_weights().unwrap()).unwrap();
        let w = spec.spatial_weights().unwrap();
        let slow = TauPreconditioner::build(&spec, &w, &t, DEFAULT_ETA).unwrap();
        let fast = TauPreconditioner::build_with(&spec, &w, &t, DEFAULT_ETA, BlockSolver::FastInversion).unwrap();
        let v = sample(slow.len(), 9);
        let a = slow.apply_p_inv(&v).unwrap();
        let b = fast.apply_p_inv(&v).unwrap();
        assert!(max_rel(&b, &a) < 1e-11);
    }

    #[test]
    fn rejects_wrong_lengths() {
        let (_, p) = setup(0.5, 3, &[4]);
        assert!(p.apply_p_inv(&[0.0; 11]).is_err());
        assert!(p.apply_pl_inv(&[0.0; 13]).is_err());
        assert!(p.apply_pr(&[0.0; 1]).is_err());
    }

    #[test]
    fn apply_is_deterministic() {
        let (_, p) = setup(0.5, 16, &[20, 12]);
        let v = sample(p.len(), 5);
        assert_eq!(p.apply_p_inv(&v).unwrap(), p.apply_p_inv(&v).unwrap());
    }
}
