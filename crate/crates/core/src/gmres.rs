//! Restarted GMRES with a left preconditioner, and the three solver drivers.
//!
//! [`gmres_solve`] works on `M^{-1} Z x = M^{-1} b`. The recorded residual is
//! the preconditioned one, `||M^{-1}(b - Z x_k)||_2`, with one entry for the
//! initial guess followed by one entry per inner iteration. Inner estimates
//! come from the Givens recurrence; at every restart the residual is
//! recomputed from scratch.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::operators::AllAtOnceOperator;
use crate::tau::TauPreconditioner;

/// A linear map applied as `y = Op x`.
pub trait LinearOperator: Sync {
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()>;
}

impl<F> LinearOperator for F
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self(x, y)
    }
}

/// The identity, for unpreconditioned runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl LinearOperator for Identity {
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        check_len(x.len(), y.len())?;
        y.copy_from_slice(x);
        Ok(())
    }
}

/// Which residual the stopping test measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopCriterion {
    /// `||M^{-1}(b - Z x_k)|| <= tol ||M^{-1}(b - Z x_0)||`.
    #[default]
    Preconditioned,
    /// `||b - Z x_k|| <= tol ||b - Z x_0||`. Costs one extra product with
    /// `Z` per iteration; meant as a diagnostic.
    Unpreconditioned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub restart: usize,
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Keep the full residual history; otherwise only the first and last
    /// entries are kept.
    pub record_history: bool,
    pub stop: StopCriterion,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            restart: 20,
            rel_tol: 1e-10,
            max_iters: 10_000,
            record_history: true,
            stop: StopCriterion::Preconditioned,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restart == 0 {
            return Err(Error::param("restart", "must be at least 1"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::param("rel_tol", format!("{} not in (0, 1)", self.rel_tol)));
        }
        if self.max_iters < self.restart {
            return Err(Error::param("max_iters", "must be at least the restart length"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Total inner iterations over all cycles.
    pub iterations: usize,
    pub converged: bool,
    /// The Krylov space became invariant before the tolerance was met.
    pub breakdown: bool,
    /// Preconditioned residual norms, starting with the initial one.
    pub residual_history: Vec<f64>,
    /// Unpreconditioned residual norms, only for
    /// [`StopCriterion::Unpreconditioned`].
    pub true_residual_history: Option<Vec<f64>>,
    /// Seconds spent inside the solve.
    pub wall_time: f64,
    pub solution: Vec<f64>,
}

impl SolveReport {
    /// Last recorded residual over the first one.
    pub fn final_relres(&self) -> f64 {
        match (self.residual_history.first(), self.residual_history.last()) {
            (Some(&r0), Some(&r)) if r0 > 0.0 => r / r0,
            _ => 0.0,
        }
    }
}

/// Deterministic parallel dot product: fixed-size chunks summed in order.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    const CHUNK: usize = 4096;
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha x`.
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.par_iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// `out = b - Z x`.
fn residual<Z: LinearOperator + ?Sized>(op: &Z, b: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
    op.apply(x, out)?;
    check_finite(out, "operator")?;
    out.par_iter_mut().zip(b.par_iter()).for_each(|(o, bi)| *o = bi - *o);
    Ok(())
}

/// Back substitution with the leading `k x k` block of the Hessenberg
/// factor, stored column-wise as `h[col][row]`.
fn solve_upper(h: &[Vec<f64>], g: &[f64], k: usize) -> Vec<f64> {
    let mut y = g[..k].to_vec();
    for i in (0..k).rev() {
        for j in i + 1..k {
            y[i] -= h[j][i] * y[j];
        }
        y[i] /= h[i][i];
    }
    y
}

/// Restarted GMRES for `M^{-1} Z x = M^{-1} b` starting from `x0`.
pub fn gmres_solve<Z, M>(op: &Z, prec: &M, rhs: &[f64], x0: &[f64], cfg: &SolverConfig) -> Result<SolveReport>
where
    Z: LinearOperator + ?Sized,
    M: LinearOperator + ?Sized,
{
    cfg.validate()?;
    check_len(rhs.len(), x0.len())?;
    check_finite(rhs, "right-hand side")?;
    let start = Instant::now();
    let n = rhs.len();
    let mut x = x0.to_vec();
    let mut raw = vec![0.0; n];
    let mut r = vec![0.0; n];

    let precondition = |src: &[f64], dst: &mut [f64]| -> Result<()> {
        prec.apply(src, dst)?;
        check_finite(dst, "preconditioner")
    };

    residual(op, rhs, &x, &mut raw)?;
    precondition(&raw, &mut r)?;
    let r0 = norm(&r);
    let mut history = vec![r0];
    let true_tracking = cfg.stop == StopCriterion::Unpreconditioned;
    let true0 = norm(&raw);
    let mut true_history = true_tracking.then(|| vec![true0]);
    let (target, true_target) = (cfg.rel_tol * r0, cfg.rel_tol * true0);

    let mut total = 0;
    let mut converged = r0 == 0.0 || (true_tracking && true0 == 0.0);
    let mut breakdown = false;
    let m = cfg.restart;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut w = vec![0.0; n];

    while !converged && total < cfg.max_iters {
        let beta = norm(&r);
        if beta == 0.0 {
            converged = true;
            break;
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let (mut cs, mut sn): (Vec<f64>, Vec<f64>) = (Vec::with_capacity(m), Vec::with_capacity(m));
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;

        for j in 0..m {
            if total >= cfg.max_iters {
                break;
            }
            op.apply(&basis[j], &mut raw)?;
            check_finite(&raw, "operator")?;
            precondition(&raw, &mut w)?;

            let mut col = vec![0.0; j + 2];
            let before = norm(&w);
            for (i, v) in basis.iter().enumerate() {
                let c = dot(&w, v);
                col[i] = c;
                axpy(-c, v, &mut w);
            }
            let mut after = norm(&w);
            if after < before / 1e3 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    col[i] += c;
                    axpy(-c, v, &mut w);
                }
                after = norm(&w);
            }
            col[j + 1] = after;

            for i in 0..j {
                let (a, b) = (col[i], col[i + 1]);
                col[i] = cs[i] * a + sn[i] * b;
                col[i + 1] = -sn[i] * a + cs[i] * b;
            }
            let rho = col[j].hypot(col[j + 1]);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (col[j] / rho, col[j + 1] / rho) };
            cs.push(c);
            sn.push(s);
            col[j] = rho;
            col[j + 1] = 0.0;
            g[j + 1] = -s * g[j];
            g[j] *= c;
            h.push(col);

            total += 1;
            k = j + 1;
            let estimate = g[j + 1].abs();
            history.push(estimate);

            let happy = after <= 1e-14 * before;
            let mut done = estimate <= target;
            if let Some(th) = true_history.as_mut() {
                let y = solve_upper(&h, &g, k);
                let mut trial = x.clone();
                for (yi, v) in y.iter().zip(&basis) {
                    axpy(*yi, v, &mut trial);
                }
                residual(op, rhs, &trial, &mut raw)?;
                let t = norm(&raw);
                th.push(t);
                done = t <= true_target;
            }
            if done || happy {
                converged = true;
                breakdown = happy && !done;
                break;
            }
            if j + 1 < m {
                basis.push(w.iter().map(|v| v / after).collect());
            }
        }

        let y = solve_upper(&h, &g, k);
        for (yi, v) in y.iter().zip(&basis) {
            axpy(*yi, v, &mut x);
        }
        if converged {
            break;
        }
        residual(op, rhs, &x, &mut raw)?;
        precondition(&raw, &mut r)?;
    }

    if !cfg.record_history && history.len() > 2 {
        history = vec![history[0], history[history.len() - 1]];
    }
    Ok(SolveReport {
        iterations: total,
        converged,
        breakdown,
        residual_history: history,
        true_residual_history: true_history,
        wall_time: start.elapsed().as_secs_f64(),
        solution: x,
    })
}

/// The three solver variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SolverKind {
    /// Single-sided tau preconditioner `P`.
    #[serde(rename = "os")]
    OneSided,
    /// Two-sided pair `P_l`, `P_r`.
    #[serde(rename = "ts")]
    TwoSided,
    /// No preconditioner.
    #[serde(rename = "i")]
    Unpreconditioned,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [
        SolverKind::OneSided,
        SolverKind::TwoSided,
        SolverKind::Unpreconditioned,
    ];

    /// Short tag used on the command line and in CSV output.
    pub fn tag(self) -> &'static str {
        match self {
            SolverKind::OneSided => "os",
            SolverKind::TwoSided => "ts",
            SolverKind::Unpreconditioned => "i",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SolverKind::OneSided => "GMRES-OS",
            SolverKind::TwoSided => "GMRES-TS",
            SolverKind::Unpreconditioned => "GMRES-I",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "os" | "gmres-os" => Ok(SolverKind::OneSided),
            "ts" | "gmres-ts" => Ok(SolverKind::TwoSided),
            "i" | "gmres-i" | "none" => Ok(SolverKind::Unpreconditioned),
            other => Err(Error::param("solver", format!("unknown solver `{other}`"))),
        }
    }
}

/// GMRES on `P^{-1} A u = P^{-1} f` from a zero initial guess.
pub fn solve_os(
    a: &AllAtOnceOperator,
    p: &TauPreconditioner,
    rhs: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    let op = |x: &[f64], y: &mut [f64]| a.apply_into(x, y);
    let prec = |x: &[f64], y: &mut [f64]| p.apply_p_inv_into(x, y);
    gmres_solve(&op, &prec, rhs, &vec![0.0; rhs.len()], cfg)
}

/// GMRES on `P_l^{-1} A P_r^{-1} u_hat = P_l^{-1} f` from a zero initial
/// guess; the reported solution is `u = P_r^{-1} u_hat` and the wall time
/// includes that final map.
pub fn solve_ts(
    a: &AllAtOnceOperator,
    p: &TauPreconditioner,
    rhs: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    let start = Instant::now();
    let op = |x: &[f64], y: &mut [f64]| {
        let z = p.apply_pr_inv(x)?;
        a.apply_into(&z, y)
    };
    let prec = |x: &[f64], y: &mut [f64]| p.apply_pl_inv_into(x, y);
    let mut report = gmres_solve(&op, &prec, rhs, &vec![0.0; rhs.len()], cfg)?;
    report.solution = p.apply_pr_inv(&report.solution)?;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

/// GMRES on `A u = f` from a zero initial guess.
pub fn solve_unpreconditioned(a: &AllAtOnceOperator, rhs: &[f64], cfg: &SolverConfig) -> Result<SolveReport> {
    let op = |x: &[f64], y: &mut [f64]| a.apply_into(x, y);
    gmres_solve(&op, &Identity, rhs, &vec![0.0; rhs.len()], cfg)
}

/// Dispatches to [`solve_os`], [`solve_ts`] or [`solve_unpreconditioned`].
pub fn solve(
    kind: SolverKind,
    a: &AllAtOnceOperator,
    p: &TauPreconditioner,
    rhs: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    match kind {
        SolverKind::OneSided => solve_os(a, p, rhs, cfg),
        SolverKind::TwoSided => solve_ts(a, p, rhs, cfg),
        SolverKind::Unpreconditioned => solve_unpreconditioned(a, rhs, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(d: Vec<f64>) -> impl Fn(&[f64], &mut [f64]) -> Result<()> + Sync {
        move |x: &[f64], y: &mut [f64]| {
            for ((yi, xi), di) in y.iter_mut().zip(x).zip(&d) {
                *yi = di * xi;
            }
            Ok(())
        }
    }

    #[test]
    fn identity_converges_in_one_step() {
        let b = vec![1.0, -2.0, 3.0, 0.5];
        let r = gmres_solve(&Identity, &Identity, &b, &[0.0; 4], &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        for (x, y) in r.solution.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn two_by_two_diagonal() {
        let op = diag(vec![1.0, 2.0]);
        let r = gmres_solve(&op, &Identity, &[1.0, 2.0], &[0.0; 2], &SolverConfig::default()).unwrap();
        assert!(r.converged && r.iterations <= 2);
        assert!((r.solution[0] - 1.0).abs() < 1e-12 && (r.solution[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs_needs_no_iterations() {
        let r = gmres_solve(&Identity, &Identity, &[0.0; 3], &[0.0; 3], &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn restarts_and_history_shape() {
        let d: Vec<f64> = (1..=60).map(|i| i as f64).collect();
        let op = diag(d);
        let b = vec![1.0; 60];
        let cfg = SolverConfig {
            restart: 5,
            ..SolverConfig::default()
        };
        let r = gmres_solve(&op, &Identity, &b, &[0.0; 60], &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(r.residual_history.len(), r.iterations + 1);
        assert!(r.final_relres() <= 1e-10);
        for cycle in r.residual_history[1..].chunks(5) {
            for pair in cycle.windows(2) {
                assert!(pair[1] <= pair[0] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn hits_iteration_cap() {
        let d: Vec<f64> = (1..=50).map(|i| (i * i) as f64).collect();
        let op = diag(d);
        let cfg = SolverConfig {
            restart: 2,
            max_iters: 4,
            ..SolverConfig::default()
        };
        let r = gmres_solve(&op, &Identity, &[1.0; 50], &[0.0; 50], &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 4);
    }

    #[test]
    fn non_finite_is_an_error() {
        let op = |_: &[f64], y: &mut [f64]| {
            y.fill(f64::NAN);
            Ok(())
        };
        assert!(matches!(
            gmres_solve(&op, &Identity, &[1.0; 3], &[0.0; 3], &SolverConfig::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn true_residual_criterion() {
        let d: Vec<f64> = (1..=30).map(|i| 1.0 + i as f64 / 10.0).collect();
        let op = diag(d);
        let prec = diag((1..=30).map(|i| 1.0 / (1.0 + i as f64 / 11.0)).collect());
        let cfg = SolverConfig {
            stop: StopCriterion::Unpreconditioned,
            ..SolverConfig::default()
        };
        let r = gmres_solve(&op, &prec, &[1.0; 30], &[0.0; 30], &cfg).unwrap();
        let th = r.true_residual_history.as_ref().unwrap();
        assert_eq!(th.len(), r.residual_history.len());
        assert!(th.last().unwrap() <= &(1e-10 * th[0]));
    }

    #[test]
    fn rejects_bad_config() {
        let bad = SolverConfig {
            rel_tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(gmres_solve(&Identity, &Identity, &[1.0], &[0.0], &bad).is_err());
        let bad = SolverConfig {
            max_iters: 3,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn solver_tags_round_trip() {
        for k in SolverKind::ALL {
            assert_eq!(k.tag().parse::<SolverKind>().unwrap(), k);
        }
        assert!("x".parse::<SolverKind>().is_err());
    }
}
