//! The two-dimensional model problem and the sweep driver behind the CLI.
//!
//! The model problem lives on the unit square with unit diffusion
//! coefficients, zero initial value and final time 1, and has the exact
//! solution `u = t^(alpha+1) x1^2 (1-x1)^2 x2^2 (1-x2)^2`.
//!
//! `M` in configs, tables and CSV output is the number of interior grid
//! points per direction, so `M = 129` means mesh width `1/130`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discretization::{gamma, ProblemSpec, SpatialScheme};
use crate::error::{Error, Result};
use crate::gmres::{solve, SolverConfig, SolverKind, StopCriterion};
use crate::operators::{assemble_rhs, AllAtOnceOperator, TemporalOperator};
use crate::tau::{BlockSolver, TauPreconditioner, DEFAULT_ETA};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "AAOTAU_THREADS";

/// Source term of the model problem.
pub fn example_2d_forcing(x1: f64, x2: f64, t: f64, alpha: f64, beta1: f64, beta2: f64) -> f64 {
    Forcing::new(alpha, beta1, beta2).eval(x1, x2, t)
}

/// [`example_2d_forcing`] with the Gamma and cosine factors precomputed.
#[derive(Debug, Clone, Copy)]
pub struct Forcing {
    alpha: f64,
    beta: [f64; 2],
    // Per direction: 1/(2cos(beta pi/2)) and 1/Gamma(3-beta), 1/Gamma(4-beta), 1/Gamma(5-beta).
    prefactor: [f64; 2],
    inv_gamma: [[f64; 3]; 2],
    gamma_alpha: f64,
}

impl Forcing {
    pub fn new(alpha: f64, beta1: f64, beta2: f64) -> Self {
        let beta = [beta1, beta2];
        Forcing {
            alpha,
            beta,
            prefactor: beta.map(|b| 1.0 / (2.0 * (b * PI / 2.0).cos())),
            inv_gamma: beta.map(|b| [3.0, 4.0, 5.0].map(|k| 1.0 / gamma(k - b))),
            gamma_alpha: gamma(alpha + 2.0),
        }
    }

    fn riesz(&self, axis: usize, x: f64) -> f64 {
        let b = self.beta[axis];
        let side = |p: f64| x.powf(p - b) + (1.0 - x).powf(p - b);
        let g = &self.inv_gamma[axis];
        self.prefactor[axis] * (2.0 * side(2.0) * g[0] - 12.0 * side(3.0) * g[1] + 24.0 * side(4.0) * g[2])
    }

    pub fn eval(&self, x1: f64, x2: f64, t: f64) -> f64 {
        let bump = |x: f64| x * x * (1.0 - x) * (1.0 - x);
        t.powf(self.alpha + 1.0) * (self.riesz(0, x1) * bump(x2) + self.riesz(1, x2) * bump(x1))
            + self.gamma_alpha * t * bump(x1) * bump(x2)
    }
}

/// Exact solution of the model problem.
pub fn example_2d_exact(x1: f64, x2: f64, t: f64, alpha: f64) -> f64 {
    let bump = |x: f64| x * x * (1.0 - x) * (1.0 - x);
    t.powf(alpha + 1.0) * bump(x1) * bump(x2)
}

fn default_scheme() -> SpatialScheme {
    SpatialScheme::ShiftedGrunwald
}
fn default_solvers() -> Vec<SolverKind> {
    vec![SolverKind::OneSided, SolverKind::TwoSided]
}
fn default_final_time() -> f64 {
    1.0
}
fn default_restart() -> usize {
    20
}
fn default_rel_tol() -> f64 {
    1e-10
}
fn default_max_iters() -> usize {
    10_000
}
fn default_eta() -> f64 {
    DEFAULT_ETA
}
fn default_max_dense() -> usize {
    4096
}

/// A parameter sweep over the model problem, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `(alpha, beta1, beta2)` triples.
    pub triples: Vec<[f64; 3]>,
    /// Numbers of time steps `N`.
    pub n_time: Vec<usize>,
    /// Interior points `M` per direction.
    pub interior: Vec<usize>,
    #[serde(default = "default_scheme")]
    pub scheme: SpatialScheme,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverKind>,
    #[serde(default = "default_final_time")]
    pub final_time: f64,
    #[serde(default = "default_restart")]
    pub restart: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub stop: StopCriterion,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub fast_block_solver: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub checks: bool,
    #[serde(default = "default_max_dense")]
    pub max_dense: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(Error::Config("solver list is empty".into()));
        }
        if self.triples.is_empty() || self.n_time.is_empty() || self.interior.is_empty() {
            return Err(Error::Config("triples, n_time and interior must be nonempty".into()));
        }
        for &[a, b1, b2] in &self.triples {
            self.spec(a, b1, b2, 1, 1)?;
        }
        for &n in &self.n_time {
            self.spec(0.5, 1.5, 1.5, n, 1)?;
        }
        for &m in &self.interior {
            self.spec(0.5, 1.5, 1.5, 1, m)?;
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta = {} is not positive", self.eta)));
        }
        self.solver_config().validate()
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            restart: self.restart,
            rel_tol: self.rel_tol,
            max_iters: self.max_iters,
            record_history: true,
            stop: self.stop,
        }
    }

    /// Problem data for one sweep point.
    pub fn spec(&self, alpha: f64, beta1: f64, beta2: f64, n: usize, m: usize) -> Result<ProblemSpec> {
        let spec = ProblemSpec {
            alpha,
            beta: vec![beta1, beta2],
            diffusion: vec![1.0, 1.0],
            bounds: vec![(0.0, 1.0), (0.0, 1.0)],
            final_time: self.final_time,
            n_time: n,
            interior: vec![m, m],
            scheme: self.scheme,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Sweep points in output order: triple, then `N`, then `m`.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &[alpha, beta1, beta2] in &self.triples {
            for &n_time in &self.n_time {
                for &interior in &self.interior {
                    out.push(SweepPoint {
                        alpha,
                        beta1,
                        beta2,
                        n_time,
                        interior,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub n_time: usize,
    pub interior: usize,
}

/// One solve, one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    #[serde(rename = "N")]
    pub n_time: usize,
    /// Interior points per direction.
    #[serde(rename = "M")]
    pub interior: usize,
    pub solver: SolverKind,
    pub iters: usize,
    pub cpu_seconds: f64,
    pub error_inf: f64,
    pub final_relres: f64,
    pub converged: bool,
}

/// Full output of a single solve, for callers that need more than a row.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub record: RunRecord,
    pub residual_history: Vec<f64>,
    pub true_residual_history: Option<Vec<f64>>,
}

/// Maximum over all grid nodes and time levels of `|u - u_exact|`.
pub fn max_error(spec: &ProblemSpec, u: &[f64]) -> f64 {
    let n = spec.n_time;
    let mu = spec.time_step();
    u.chunks(n)
        .enumerate()
        .map(|(s, block)| {
            let x = spec.spatial_point(s);
            block
                .iter()
                .enumerate()
                .map(|(k, &v)| (v - example_2d_exact(x[0], x[1], (k + 1) as f64 * mu, spec.alpha)).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Assembles the model problem at one sweep point and runs every solver.
pub fn run_point(cfg: &ExperimentConfig, point: SweepPoint, solvers: &[SolverKind]) -> Result<Vec<PointOutcome>> {
    let SweepPoint {
        alpha,
        beta1,
        beta2,
        n_time,
        interior,
    } = point;
    let spec = cfg.spec(alpha, beta1, beta2, n_time, interior)?;
    let temporal = TemporalOperator::from_weights(&spec.temporal_weights()?)?;
    let weights = spec.spatial_weights()?;
    let block = if cfg.fast_block_solver {
        BlockSolver::FastInversion
    } else {
        BlockSolver::ForwardSubstitution
    };
    let p = TauPreconditioner::build_with(&spec, &weights, &temporal, cfg.eta, block)?;
    let a = AllAtOnceOperator::from_spec(&spec)?;
    let forcing = Forcing::new(alpha, beta1, beta2);
    let rhs = assemble_rhs(
        &spec,
        |x, t| forcing.eval(x[0], x[1], t),
        |_| 0.0,
    )?;
    let solver_cfg = cfg.solver_config();
    solvers
        .iter()
        .map(|&kind| {
            let report = solve(kind, &a, &p, &rhs, &solver_cfg)?;
            Ok(PointOutcome {
                record: RunRecord {
                    alpha,
                    beta1,
                    beta2,
                    n_time,
                    interior,
                    solver: kind,
                    iters: report.iterations,
                    cpu_seconds: report.wall_time,
                    error_inf: max_error(&spec, &report.solution),
                    final_relres: report.final_relres(),
                    converged: report.converged,
                },
                residual_history: report.residual_history,
                true_residual_history: report.true_residual_history,
            })
        })
        .collect()
}

/// Runs every sweep point in order and, if `cfg.output` is set, writes the
/// CSV there. Points run one after another so that timings are not skewed
/// by competing solves; each solve is parallel internally.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let mut records = Vec::new();
    for point in cfg.points() {
        for outcome in run_point(cfg, point, &cfg.solvers)? {
            records.push(outcome.record);
        }
    }
    if let Some(path) = &cfg.output {
        write_csv(path, &records)?;
    }
    Ok(records)
}

/// Header of the raw CSV output, in column order.
pub const CSV_HEADER: &str = "alpha,beta1,beta2,N,M,solver,iters,cpu_seconds,error_inf,final_relres,converged";

pub fn write_csv_to<W: std::io::Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    if records.is_empty() {
        writer.write_record(CSV_HEADER.split(','))?;
    }
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    write_csv_to(std::fs::File::create(path)?, records)
}

pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Fixed-width text table: one row per
/// `(alpha, beta1, beta2, N, M)`, the OS error, then iterations and CPU
/// seconds per solver. Unconverged runs show `--` for CPU.
pub fn render_table(records: &[RunRecord]) -> String {
    let mut solvers: Vec<SolverKind> = records.iter().map(|r| r.solver).collect();
    solvers.sort();
    solvers.dedup();

    let key = |r: &RunRecord| (r.alpha, r.beta1, r.beta2, r.n_time, r.interior);
    let mut keys: Vec<(f64, f64, f64, usize, usize)> = records.iter().map(key).collect();
    keys.sort_by(|a, b| a.partial_cmp(b).expect("finite parameters"));
    keys.dedup();

    let mut out = String::new();
    let _ = write!(out, "{:<17} {:>5} {:>5} {:>10}", "(alpha,b1,b2)", "N", "M", "Error");
    for s in &solvers {
        let _ = write!(out, " | {:>8} {:>6} {:>9}", s.label(), "Iter", "CPU(s)");
    }
    out.push('\n');
    let mut last_triple = None;
    for k in keys {
        let (a, b1, b2, n, m) = k;
        let rows: Vec<&RunRecord> = records.iter().filter(|r| key(r) == k).collect();
        let error = rows
            .iter()
            .find(|r| r.solver == SolverKind::OneSided)
            .or(rows.first())
            .map(|r| r.error_inf)
            .unwrap_or(f64::NAN);
        let triple = format!("({a},{b1},{b2})");
        let label = if last_triple.as_deref() == Some(triple.as_str()) {
            String::new()
        } else {
            triple.clone()
        };
        last_triple = Some(triple);
        let _ = write!(out, "{label:<17} {n:>5} {m:>5} {error:>10.2E}");
        for s in &solvers {
            match rows.iter().find(|r| r.solver == *s) {
                Some(r) => {
                    let cpu = if r.converged {
                        format!("{:.2}", r.cpu_seconds)
                    } else {
                        "--".to_string()
                    };
                    let _ = write!(out, " | {:>8} {:>6} {:>9}", "", r.iters, cpu);
                }
                None => {
                    let _ = write!(out, " | {:>8} {:>6} {:>9}", "", "", "");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Reads [`THREADS_ENV`] and, if set, sizes the global thread pool.
pub fn configure_threads() -> Result<()> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{THREADS_ENV}={v} is not a thread count")))?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(e.to_string()))
        }
        Err(_) => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_solution_values() {
        assert_eq!(example_2d_exact(0.5, 0.5, 1.0, 0.3), 2f64.powi(-8));
        assert_eq!(example_2d_exact(0.0, 0.4, 0.7, 0.3), 0.0);
        assert_eq!(example_2d_exact(0.2, 0.4, 0.0, 0.3), 0.0);
    }

    #[test]
    fn forcing_matches_high_precision_values() {
        // 40-digit reference evaluations of the closed form.
        let a = example_2d_forcing(0.5, 0.5, 1.0, 0.5, 1.5, 1.5);
        assert!((a - 0.061611694246100382681).abs() <= 1e-13);
        let b = example_2d_forcing(0.25, 0.6, 0.5, 0.1, 1.1, 1.9);
        assert!((b - 0.015307969991908164916).abs() <= 1e-13);
    }

    #[test]
    fn forcing_vanishes_at_time_zero() {
        assert_eq!(example_2d_forcing(0.3, 0.7, 0.0, 0.4, 1.2, 1.8), 0.0);
    }

    #[test]
    fn config_parsing() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            triples = [[0.1, 1.1, 1.1], [0.9, 1.9, 1.9]]
            n_time = [8]
            interior = [7]
            solvers = ["os", "i"]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.solvers, vec![SolverKind::OneSided, SolverKind::Unpreconditioned]);
        assert_eq!(cfg.points().len(), 2);
        assert_eq!(cfg.restart, 20);
        assert!(ExperimentConfig::from_toml("triples = [[0.1, 1.1, 2.5]]\nn_time=[4]\ninterior=[4]").is_err());
        assert!(ExperimentConfig::from_toml("triples = [[0.1, 1.1, 1.5]]\nn_time=[4]\ninterior=[4]\nsolvers=[]").is_err());
        assert!(ExperimentConfig::from_toml("triples = [[0.1, 1.1, 1.5]]\nn_time=[4]\ninterior=[4]\nbogus=1").is_err());
    }

    fn record(solver: SolverKind, converged: bool) -> RunRecord {
        RunRecord {
            alpha: 0.1,
            beta1: 1.1,
            beta2: 1.1,
            n_time: 64,
            interior: 129,
            solver,
            iters: 8,
            cpu_seconds: 1.25,
            error_inf: 3.01e-4,
            final_relres: 5e-11,
            converged,
        }
    }

    #[test]
    fn csv_header_and_round_trip() {
        let mut buf = Vec::new();
        write_csv_to(&mut buf, &[record(SolverKind::TwoSided, true)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert!(text.lines().nth(1).unwrap().contains(",ts,8,"));
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let back: RunRecord = reader.deserialize().next().unwrap().unwrap();
        assert_eq!(back, record(SolverKind::TwoSided, true));
    }

    #[test]
    fn table_marks_unconverged_runs() {
        let one = render_table(&[record(SolverKind::OneSided, true)]);
        assert_eq!(one.lines().count(), 2);
        assert!(one.contains("3.01E-4"));
        let t = render_table(&[record(SolverKind::OneSided, true), record(SolverKind::Unpreconditioned, false)]);
        assert!(t.lines().nth(1).unwrap().trim_end().ends_with("--"));
    }

    #[test]
    fn table_order_is_deterministic() {
        let mut a = record(SolverKind::OneSided, true);
        let mut b = a.clone();
        a.n_time = 128;
        b.n_time = 64;
        assert_eq!(render_table(&[a.clone(), b.clone()]), render_table(&[b, a]));
    }

    #[test]
    fn small_sweep_solves_accurately() {
        let cfg = ExperimentConfig::from_toml(
            "triples = [[0.5, 1.5, 1.7]]\nn_time = [16]\ninterior = [15]\nsolvers = [\"os\", \"ts\", \"i\"]",
        )
        .unwrap();
        let records = run_sweep(&cfg).unwrap();
        assert_eq!(records.len(), 3);
        for r in &records {
            assert!(r.converged, "{r:?}");
            assert_eq!(r.interior, 15);
            assert!(r.error_inf < 1e-3);
        }
        let e = records[0].error_inf;
        for r in &records {
            assert!((r.error_inf - e).abs() <= 0.01 * e);
        }
    }
}
