//! Dense reference matrices and spectral checks for small problems.
//!
//! Everything here is built explicitly from Kronecker products of dense
//! factors, independently of the matrix-free code paths, and is meant for
//! tests and diagnostics only. Sizes are capped (see [`DEFAULT_MAX_DENSE`]).

use std::fmt;

use nalgebra::{Cholesky, DMatrix};

use crate::discretization::{spatial_weights, verify_weight_properties, ProblemSpec, SpatialScheme, SpatialWeights};
use crate::error::{Error, Result};
use crate::operators::{AllAtOnceOperator, TemporalOperator};
use crate::tau::{sine_matrix_entry, tau_eigenvalues, TauPreconditioner, DEFAULT_ETA};

pub type DenseMatrix = DMatrix<f64>;

/// Default cap on `N * J` for dense all-at-once matrices.
pub const DEFAULT_MAX_DENSE: usize = 4096;

/// Default horizon for the prefix minimum in [`check_c_lower_bound`].
pub const DEFAULT_HORIZON: usize = 4096;

fn check_cap(size: usize, cap: usize) -> Result<()> {
    if size > cap {
        Err(Error::DenseCapExceeded { size, cap })
    } else {
        Ok(())
    }
}

/// Symmetric Toeplitz matrix with first column `w[..m]`.
pub fn dense_w(w: &[f64], m: usize) -> DenseMatrix {
    DenseMatrix::from_fn(m, m, |i, j| w[i.abs_diff(j)])
}

/// The Hankel matrix with first column `(w_2, ..., w_{m-1}, 0, 0)` and last
/// column its reverse. With one-based indices, entry `(i, j)` is
/// `w_{i+j}` for `i + j <= m - 1`, `w_{2m+2-(i+j)}` for `i + j >= m + 3`,
/// and zero otherwise.
pub fn dense_hankel_correction(w: &[f64], m: usize) -> DenseMatrix {
    DenseMatrix::from_fn(m, m, |i, j| {
        let s = i + j + 2;
        if s + 1 <= m {
            w[s]
        } else if s >= m + 3 {
            w[2 * m + 2 - s]
        } else {
            0.0
        }
    })
}

/// `tau(W) = W - H`.
pub fn dense_tau(w: &[f64], m: usize) -> DenseMatrix {
    dense_w(w, m) - dense_hankel_correction(w, m)
}

/// The orthonormal sine matrix `S_m`.
pub fn dense_sine(m: usize) -> DenseMatrix {
    DenseMatrix::from_fn(m, m, |j, k| sine_matrix_entry(m, j + 1, k + 1))
}

/// `S = S_{m_1} ⊗ ... ⊗ S_{m_d}`.
pub fn dense_sine_kron(dims: &[usize]) -> DenseMatrix {
    dims.iter()
        .fold(DenseMatrix::identity(1, 1), |acc, &m| acc.kronecker(&dense_sine(m)))
}

/// Lower-triangular Toeplitz `T`.
pub fn dense_t(temporal: &TemporalOperator) -> DenseMatrix {
    let c = temporal.column();
    let n = c.len();
    DenseMatrix::from_fn(n, n, |i, j| if i >= j { c[i - j] } else { 0.0 })
}

/// `sum_i scale_i I ⊗ F_i ⊗ I` for dense factors `F_i`.
fn kron_sum(factors: &[DenseMatrix], scale: &[f64]) -> DenseMatrix {
    let dims: Vec<usize> = factors.iter().map(|f| f.nrows()).collect();
    let j: usize = dims.iter().product();
    let mut out = DenseMatrix::zeros(j, j);
    for (axis, f) in factors.iter().enumerate() {
        let before: usize = dims[..axis].iter().product();
        let after: usize = dims[axis + 1..].iter().product();
        let term = DenseMatrix::identity(before, before)
            .kronecker(f)
            .kronecker(&DenseMatrix::identity(after, after));
        out += term * scale[axis];
    }
    out
}

fn check_weights(spec: &ProblemSpec, weights: &[SpatialWeights]) -> Result<()> {
    spec.validate()?;
    if weights.len() != spec.dim() || weights.iter().zip(&spec.interior).any(|(w, &m)| w.len() != m) {
        return Err(Error::param("weights", "one weight sequence of length m_i per direction"));
    }
    Ok(())
}

/// `B = sum_i eta_i I ⊗ W_{m_i} ⊗ I`.
pub fn dense_b(spec: &ProblemSpec, weights: &[SpatialWeights], cap: usize) -> Result<DenseMatrix> {
    check_weights(spec, weights)?;
    check_cap(spec.num_spatial(), cap)?;
    let factors: Vec<_> = weights.iter().map(|w| dense_w(&w.w, w.len())).collect();
    Ok(kron_sum(&factors, &spec.etas()))
}

/// `B_tau = eta sum_i eta_i I ⊗ tau(W_{m_i}) ⊗ I`.
pub fn dense_b_tau(spec: &ProblemSpec, weights: &[SpatialWeights], eta: f64, cap: usize) -> Result<DenseMatrix> {
    check_weights(spec, weights)?;
    check_cap(spec.num_spatial(), cap)?;
    let factors: Vec<_> = weights.iter().map(|w| dense_tau(&w.w, w.len())).collect();
    let scale: Vec<f64> = spec.etas().iter().map(|e| eta * e).collect();
    Ok(kron_sum(&factors, &scale))
}

/// `A = B ⊗ I_N + I_J ⊗ T`.
pub fn dense_a(
    spec: &ProblemSpec,
    weights: &[SpatialWeights],
    temporal: &TemporalOperator,
    cap: usize,
) -> Result<DenseMatrix> {
    let n = temporal.len();
    check_cap(n * spec.num_spatial(), cap)?;
    let b = dense_b(spec, weights, cap)?;
    let j = b.nrows();
    Ok(b.kronecker(&DenseMatrix::identity(n, n)) + DenseMatrix::identity(j, j).kronecker(&dense_t(temporal)))
}

/// `B_tau^{1/2}` and `B_tau^{-1/2}` from a dense symmetric eigendecomposition.
fn b_tau_roots(b_tau: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let (values, v) = symmetric_eigen(b_tau.clone());
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, &x)| x <= 0.0) {
        return Err(Error::NonPositiveEigenvalue { index, value });
    }
    let scaled = |f: fn(f64) -> f64| {
        let d = nalgebra::DVector::from_iterator(values.len(), values.iter().map(|&x| f(x)));
        &v * DenseMatrix::from_diagonal(&d) * v.transpose()
    };
    Ok((scaled(f64::sqrt), scaled(|x| 1.0 / x.sqrt())))
}

/// Dense `P`, `P_l` and `P_r` for one problem.
pub struct DensePreconditioners {
    pub p: DenseMatrix,
    pub pl: DenseMatrix,
    pub pr: DenseMatrix,
    pub b_tau: DenseMatrix,
}

/// `P = I_J ⊗ T + B_tau ⊗ I_N`, `P_l = B_tau^{-1/2} ⊗ T + B_tau^{1/2} ⊗ I_N`,
/// `P_r = B_tau^{1/2} ⊗ I_N`.
pub fn dense_preconditioners(
    spec: &ProblemSpec,
    weights: &[SpatialWeights],
    temporal: &TemporalOperator,
    eta: f64,
    cap: usize,
) -> Result<DensePreconditioners> {
    let n = temporal.len();
    check_cap(n * spec.num_spatial(), cap)?;
    let b_tau = dense_b_tau(spec, weights, eta, cap)?;
    let j = b_tau.nrows();
    let t = dense_t(temporal);
    let i_n = DenseMatrix::identity(n, n);
    let (root, inv_root) = b_tau_roots(&b_tau)?;
    Ok(DensePreconditioners {
        p: DenseMatrix::identity(j, j).kronecker(&t) + b_tau.kronecker(&i_n),
        pl: inv_root.kronecker(&t) + root.kronecker(&i_n),
        pr: root.kronecker(&i_n),
        b_tau,
    })
}

pub fn dense_p(spec: &ProblemSpec, weights: &[SpatialWeights], temporal: &TemporalOperator, eta: f64, cap: usize) -> Result<DenseMatrix> {
    Ok(dense_preconditioners(spec, weights, temporal, eta, cap)?.p)
}

pub fn dense_pl(spec: &ProblemSpec, weights: &[SpatialWeights], temporal: &TemporalOperator, eta: f64, cap: usize) -> Result<DenseMatrix> {
    Ok(dense_preconditioners(spec, weights, temporal, eta, cap)?.pl)
}

pub fn dense_pr(spec: &ProblemSpec, weights: &[SpatialWeights], temporal: &TemporalOperator, eta: f64, cap: usize) -> Result<DenseMatrix> {
    Ok(dense_preconditioners(spec, weights, temporal, eta, cap)?.pr)
}

/// Column-by-column extraction of a linear map of size `n`.
pub fn dense_from_map<F>(n: usize, cap: usize, apply: F) -> Result<DenseMatrix>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    check_cap(n, cap)?;
    let mut out = DenseMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for k in 0..n {
        e[k] = 1.0;
        let col = apply(&e)?;
        e[k] = 0.0;
        out.set_column(k, &nalgebra::DVector::from_vec(col));
    }
    Ok(out)
}

/// Eigenvalues and eigenvectors (as columns) of a symmetric matrix by cyclic
/// Jacobi rotations. Only the lower triangle is trusted; the upper one is
/// mirrored first.
///
/// nalgebra's `SymmetricEigen` stops early enough to leave errors around
/// `1e-9 ||m||` on some small well-conditioned matrices, which is above the
/// margins used by the checks here.
pub fn symmetric_eigen(mut a: DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "square matrix expected");
    for j in 0..n {
        for i in 0..j {
            a[(i, j)] = a[(j, i)];
        }
    }
    let mut v = DenseMatrix::identity(n, n);
    for _sweep in 0..64 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 || apq.abs() <= f64::EPSILON * (a[(p, p)] * a[(q, q)]).abs().sqrt() {
                    continue;
                }
                rotated = true;
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                for k in 0..n {
                    let (x, y) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * x - s * y;
                    a[(k, q)] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * x - s * y;
                    a[(q, k)] = s * x + c * y;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let (x, y) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * x - s * y;
                    v[(k, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

fn sorted_eigenvalues(m: DenseMatrix) -> Vec<f64> {
    let mut v = symmetric_eigen(m).0;
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DenseMatrix) -> f64 {
    sorted_eigenvalues(m.clone())[0]
}

/// Eigenvalues of the symmetric-definite pencil `(a, b)`, ascending.
/// `b` must be positive definite.
pub fn generalized_eigenvalues(a: &DenseMatrix, b: &DenseMatrix) -> Result<Vec<f64>> {
    let chol = Cholesky::new(b.clone()).ok_or(Error::param("b", "not positive definite"))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or(Error::param("b", "singular Cholesky factor"))?;
    let c = &l_inv * a * l_inv.transpose();
    let sym = (&c + c.transpose()) * 0.5;
    Ok(sorted_eigenvalues(sym))
}

/// Margin kept away from the open interval ends in inclusion checks.
pub const INCLUSION_MARGIN: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub min: f64,
    pub max: f64,
    pub passed: bool,
}

/// All eigenvalues of `tau(W)^{-1} W` must lie in `[0.5 + margin, 1.5 - margin]`.
pub fn check_spectrum_inclusion(w: &SpatialWeights, m: usize) -> Result<SpectrumReport> {
    if m == 0 || m > 512 || w.len() < m {
        return Err(Error::param("m", "need 1 <= m <= min(512, weights)"));
    }
    let ev = generalized_eigenvalues(&dense_w(&w.w, m), &dense_tau(&w.w, m))?;
    let (min, max) = (ev[0], ev[ev.len() - 1]);
    Ok(SpectrumReport {
        min,
        max,
        passed: min >= 0.5 + INCLUSION_MARGIN && max <= 1.5 - INCLUSION_MARGIN,
    })
}

/// `nu(eta) = sqrt(3 max{1/(2eta), 2eta, 1} / min{1/(2eta), 2eta/3, 1})`.
pub fn nu(eta: f64) -> f64 {
    let hi = (0.5 / eta).max(2.0 * eta).max(1.0);
    let lo = (0.5 / eta).min(2.0 * eta / 3.0).min(1.0);
    (3.0 * hi / lo).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub kappa: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Relative slack in the condition-number comparison.
pub const CONDITION_SLACK: f64 = 1e-8;

/// Spectral condition number of a square matrix from its singular values.
pub fn condition_number(m: &DenseMatrix) -> f64 {
    let s = m.singular_values();
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// `kappa_2(P_l^{-1} A P_r^{-1}) <= nu(eta)` with both sides built densely
/// using `B_tau` scaled by `eta`.
pub fn check_condition_number(
    spec: &ProblemSpec,
    weights: &[SpatialWeights],
    temporal: &TemporalOperator,
    eta: f64,
    cap: usize,
) -> Result<ConditionReport> {
    let a = dense_a(spec, weights, temporal, cap)?;
    let d = dense_preconditioners(spec, weights, temporal, eta, cap)?;
    let pl_inv = d.pl.try_inverse().ok_or(Error::param("P_l", "singular"))?;
    let pr_inv = d.pr.try_inverse().ok_or(Error::param("P_r", "singular"))?;
    let kappa = condition_number(&(pl_inv * a * pr_inv));
    let bound = nu(eta);
    Ok(ConditionReport {
        kappa,
        bound,
        passed: kappa <= bound * (1.0 + CONDITION_SLACK),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundReport {
    pub lambda_min: f64,
    pub c_check: f64,
    /// Per direction: the prefix minimum and the prefix length where it occurs.
    pub prefix_min: Vec<(f64, usize)>,
    pub horizon: usize,
    pub passed: bool,
}

/// Compares `lambda_min(B_tau)` with the mesh-independent constant
/// `eta sum_i c_i / (b_i - a_i)^beta_i min_{m' <= H} (m'+1)^beta_i (w_0 + 2 sum w_k)`.
pub fn check_c_lower_bound(spec: &ProblemSpec, eta: f64, horizon: usize) -> Result<LowerBoundReport> {
    spec.validate()?;
    if spec.interior.iter().any(|&m| m > horizon) {
        return Err(Error::param("horizon", "must cover every grid size"));
    }
    let temporal = TemporalOperator::from_weights(&spec.temporal_weights()?)?;
    let p = TauPreconditioner::build(spec, &spec.spatial_weights()?, &temporal, eta)?;
    let mut c_check = 0.0;
    let mut prefix_min = Vec::new();
    for axis in 0..spec.dim() {
        let w = spatial_weights(spec.scheme, spec.beta[axis], horizon)?;
        let report = verify_weight_properties(&w);
        let (lo, hi) = spec.bounds[axis];
        c_check += spec.diffusion[axis] / (hi - lo).powf(spec.beta[axis]) * report.prefix_min;
        prefix_min.push((report.prefix_min, report.prefix_argmin));
    }
    c_check *= eta;
    let lambda_min = p.lambda_min();
    Ok(LowerBoundReport {
        lambda_min,
        c_check,
        prefix_min,
        horizon,
        passed: c_check > 0.0 && lambda_min >= c_check * (1.0 - 1e-12),
    })
}

/// Result of one named check, printed as a single line.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn outcome(name: impl Into<String>, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        name: name.into(),
        passed,
        detail,
    }
}

fn max_rel_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    (a - b).amax() / b.amax()
}

/// A small suite covering every dense check, sized to stay under `cap`.
pub fn standard_checks(cap: usize) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();

    let mut spectrum = (f64::INFINITY, f64::NEG_INFINITY, true);
    for scheme in SpatialScheme::ALL {
        for beta in [1.1, 1.5, 1.9] {
            for m in [8, 32, 128] {
                let r = check_spectrum_inclusion(&spatial_weights(scheme, beta, m)?, m)?;
                spectrum = (spectrum.0.min(r.min), spectrum.1.max(r.max), spectrum.2 && r.passed);
            }
        }
    }
    out.push(outcome(
        "spectrum of tau(W)^-1 W in (0.5, 1.5)",
        spectrum.2,
        format!("min {:.6}, max {:.6}", spectrum.0, spectrum.1),
    ));

    let mut w_min = f64::INFINITY;
    for scheme in SpatialScheme::ALL {
        for beta in [1.1, 1.5, 1.9] {
            let w = spatial_weights(scheme, beta, 64)?;
            w_min = w_min.min(min_eigenvalue(&dense_w(&w.w, 64)));
        }
    }
    out.push(outcome("W positive definite", w_min > 0.0, format!("min eigenvalue {w_min:.3e}")));

    let mut sym_min = f64::INFINITY;
    for alpha in [0.1, 0.5, 0.9] {
        let t = TemporalOperator::from_weights(&crate::discretization::l1_weights(alpha, 128, 1.0 / 128.0)?)?;
        let d = dense_t(&t);
        sym_min = sym_min.min(min_eigenvalue(&(&d + d.transpose())));
    }
    out.push(outcome("T + T^T positive definite", sym_min > 0.0, format!("min eigenvalue {sym_min:.3e}")));

    let sizes: Vec<(usize, Vec<usize>)> = vec![(4, vec![4, 4]), (8, vec![5, 6]), (16, vec![8, 8])]
        .into_iter()
        .filter(|(n, d)| n * d.iter().product::<usize>() <= cap.min(1024))
        .collect();
    let mut kappa_max: f64 = 0.0;
    let mut kappa_ok = true;
    for alpha in [0.1, 0.5, 0.9] {
        for beta in [[1.1, 1.1], [1.5, 1.9], [1.9, 1.3]] {
            for (n, dims) in &sizes {
                let spec = ProblemSpec::unit_box(alpha, &beta, *n, dims, SpatialScheme::ShiftedGrunwald)?;
                let t = TemporalOperator::from_weights(&spec.temporal_weights()?)?;
                let r = check_condition_number(&spec, &spec.spatial_weights()?, &t, DEFAULT_ETA, cap)?;
                kappa_max = kappa_max.max(r.kappa);
                kappa_ok &= r.passed;
            }
        }
    }
    out.push(outcome(
        "kappa_2(P_l^-1 A P_r^-1) <= 3",
        kappa_ok && !sizes.is_empty(),
        format!("max kappa {kappa_max:.6} over {} problems", 9 * sizes.len()),
    ));

    let mut bound_ok = true;
    let mut worst_ratio = f64::INFINITY;
    for scheme in SpatialScheme::ALL {
        for m in [8, 64, 256] {
            let spec = ProblemSpec::unit_box(0.5, &[1.3], 1, &[m], scheme)?;
            let r = check_c_lower_bound(&spec, DEFAULT_ETA, DEFAULT_HORIZON)?;
            bound_ok &= r.passed;
            worst_ratio = worst_ratio.min(r.lambda_min / r.c_check);
        }
    }
    out.push(outcome(
        "lambda_min(B_tau) >= c_check",
        bound_ok,
        format!("min ratio lambda_min / c_check {worst_ratio:.4}"),
    ));

    let spec = ProblemSpec::unit_box(0.5, &[1.4, 1.8], 2, &[6, 5], SpatialScheme::WeightedShifted)?;
    let w = spec.spatial_weights()?;
    let ev = generalized_eigenvalues(&dense_b(&spec, &w, cap)?, &dense_b_tau(&spec, &w, DEFAULT_ETA, cap)?)?;
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    out.push(outcome(
        "sqrt(3)/3 B_tau <= B <= sqrt(3) B_tau",
        lo >= 3f64.sqrt() / 3.0 && hi <= 3f64.sqrt(),
        format!("generalized eigenvalues in [{lo:.6}, {hi:.6}]"),
    ));

    let mut equiv = 0.0f64;
    for (n, dims) in [(4usize, vec![4usize]), (8, vec![4, 4]), (4, vec![2, 2, 2])] {
        let beta: Vec<f64> = (0..dims.len()).map(|i| 1.2 + 0.3 * i as f64).collect();
        let spec = ProblemSpec::unit_box(0.6, &beta, n, &dims, SpatialScheme::CelikDuman)?;
        let w = spec.spatial_weights()?;
        let t = TemporalOperator::from_weights(&spec.temporal_weights()?)?;
        let a = AllAtOnceOperator::from_spec(&spec)?;
        let p = TauPreconditioner::build(&spec, &w, &t, DEFAULT_ETA)?;
        let size = a.len();
        let d = dense_preconditioners(&spec, &w, &t, DEFAULT_ETA, cap)?;
        let pl_inv = d.pl.clone().try_inverse().ok_or(Error::param("P_l", "singular"))?;
        let p_inv = d.p.clone().try_inverse().ok_or(Error::param("P", "singular"))?;
        let pr_inv = d.pr.clone().try_inverse().ok_or(Error::param("P_r", "singular"))?;
        equiv = equiv
            .max(max_rel_diff(&dense_from_map(size, cap, |v| a.apply(v))?, &dense_a(&spec, &w, &t, cap)?))
            .max(max_rel_diff(&dense_from_map(size, cap, |v| p.apply_p_inv(v))?, &p_inv))
            .max(max_rel_diff(&dense_from_map(size, cap, |v| p.apply_pl_inv(v))?, &pl_inv))
            .max(max_rel_diff(&dense_from_map(size, cap, |v| p.apply_pr_inv(v))?, &pr_inv));
    }
    out.push(outcome(
        "matrix-free applies match dense",
        equiv <= 1e-10,
        format!("max relative entry difference {equiv:.2e}"),
    ));

    let w = spatial_weights(SpatialScheme::ShiftedGrunwald, 1.5, 64)?;
    let q = tau_eigenvalues(&w.w, 64)?;
    let dense_q = sorted_eigenvalues(dense_tau(&w.w, 64));
    let mut q_sorted = q.clone();
    q_sorted.sort_by(|a, b| a.total_cmp(b));
    let diff = q_sorted
        .iter()
        .zip(&dense_q)
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0, f64::max);
    out.push(outcome(
        "tau eigenvalues match dense eigensolver",
        diff <= 1e-11,
        format!("max relative difference {diff:.2e}"),
    ));

    Ok(out)
}
