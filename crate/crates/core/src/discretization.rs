//! Scalar weight sequences for the time and space discretizations.
//!
//! The temporal part is the L1 quadrature of the Caputo derivative, which
//! yields the first column of the lower-triangular Toeplitz matrix `T`.
//! The spatial part offers three second-order-in-structure schemes for the
//! Riesz derivative; each produces the generating sequence `w_0, w_1, ...`
//! of a symmetric Toeplitz matrix `W_m`.
//!
//! All weight sequences are built from the multiplicative recurrences or
//! closed forms of the respective scheme, never from ratios of Gamma values,
//! so they stay finite for large indices.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gamma function in double precision.
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Finite-difference scheme used for the Riesz derivative in every direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpatialScheme {
    /// Fractional centred difference (Çelik and Duman).
    CelikDuman,
    /// Shifted Grünwald formula (Meerschaert and Tadjeran).
    ShiftedGrunwald,
    /// Weighted and shifted scheme of Sousa and Li.
    WeightedShifted,
}

impl SpatialScheme {
    pub const ALL: [SpatialScheme; 3] = [
        SpatialScheme::CelikDuman,
        SpatialScheme::ShiftedGrunwald,
        SpatialScheme::WeightedShifted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpatialScheme::CelikDuman => "celik-duman",
            SpatialScheme::ShiftedGrunwald => "shifted-grunwald",
            SpatialScheme::WeightedShifted => "weighted-shifted",
        }
    }
}

impl fmt::Display for SpatialScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpatialScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "celik-duman" | "cd" => Ok(SpatialScheme::CelikDuman),
            "shifted-grunwald" | "sg" => Ok(SpatialScheme::ShiftedGrunwald),
            "weighted-shifted" | "ws" => Ok(SpatialScheme::WeightedShifted),
            other => Err(Error::param("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

/// Continuous problem data plus the mesh sizes.
///
/// The spatial dimension `d` is the length of `beta`; `diffusion`, `bounds`
/// and `interior` must have the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub diffusion: Vec<f64>,
    /// `(lower, upper)` end points of the domain in every direction.
    pub bounds: Vec<(f64, f64)>,
    pub final_time: f64,
    /// Number of time steps `N`.
    pub n_time: usize,
    /// Interior grid points `m_i` per direction.
    pub interior: Vec<usize>,
    pub scheme: SpatialScheme,
}

impl ProblemSpec {
    /// Unit diffusion coefficients on the unit box `(0,1)^d`, final time 1.
    pub fn unit_box(
        alpha: f64,
        beta: &[f64],
        n_time: usize,
        interior: &[usize],
        scheme: SpatialScheme,
    ) -> Result<Self> {
        let d = beta.len();
        let spec = ProblemSpec {
            alpha,
            beta: beta.to_vec(),
            diffusion: vec![1.0; d],
            bounds: vec![(0.0, 1.0); d],
            final_time: 1.0,
            n_time,
            interior: interior.to_vec(),
            scheme,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.beta.len();
        if !(1..=3).contains(&d) {
            return Err(Error::param("beta", format!("dimension {d} not in 1..=3")));
        }
        if self.diffusion.len() != d || self.bounds.len() != d || self.interior.len() != d {
            return Err(Error::param(
                "dimension",
                "beta, diffusion, bounds and interior must have equal lengths",
            ));
        }
        check_alpha(self.alpha)?;
        for &b in &self.beta {
            check_beta(b)?;
        }
        if self.diffusion.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::param("diffusion", "coefficients must be positive"));
        }
        if self.bounds.iter().any(|&(lo, hi)| !(lo < hi)) {
            return Err(Error::param("bounds", "need lower < upper in every direction"));
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(Error::param("final_time", "must be positive"));
        }
        if self.n_time == 0 {
            return Err(Error::param("n_time", "need at least one time step"));
        }
        if self.interior.iter().any(|&m| m == 0) {
            return Err(Error::param("interior", "need at least one interior point"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Time step `mu = T / N`.
    pub fn time_step(&self) -> f64 {
        self.final_time / self.n_time as f64
    }

    /// Mesh width `h_i = (upper - lower) / (m_i + 1)`.
    pub fn mesh_width(&self, axis: usize) -> f64 {
        let (lo, hi) = self.bounds[axis];
        (hi - lo) / (self.interior[axis] + 1) as f64
    }

    /// Scaled diffusion coefficient `eta_i = c_i / h_i^beta_i`.
    pub fn eta(&self, axis: usize) -> f64 {
        self.diffusion[axis] / self.mesh_width(axis).powf(self.beta[axis])
    }

    pub fn etas(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.eta(i)).collect()
    }

    /// `J`, the number of spatial unknowns.
    pub fn num_spatial(&self) -> usize {
        self.interior.iter().product()
    }

    /// `N * J`, the size of the all-at-once system.
    pub fn num_unknowns(&self) -> usize {
        self.n_time * self.num_spatial()
    }

    /// Coordinates of the spatial grid point with lexicographic index `s`
    /// (last direction fastest).
    pub fn spatial_point(&self, mut s: usize) -> Vec<f64> {
        let d = self.dim();
        let mut x = vec![0.0; d];
        for axis in (0..d).rev() {
            let m = self.interior[axis];
            let j = s % m;
            s /= m;
            x[axis] = self.bounds[axis].0 + (j + 1) as f64 * self.mesh_width(axis);
        }
        x
    }

    pub fn temporal_weights(&self) -> Result<TemporalWeights> {
        l1_weights(self.alpha, self.n_time, self.time_step())
    }

    /// Spatial weights for every direction, each of length `m_i`.
    pub fn spatial_weights(&self) -> Result<Vec<SpatialWeights>> {
        self.beta
            .iter()
            .zip(&self.interior)
            .map(|(&b, &m)| spatial_weights(self.scheme, b, m))
            .collect()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::param("alpha", format!("{alpha} not in (0, 1)")))
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 1.0 && beta < 2.0 {
        Ok(())
    } else {
        Err(Error::param("beta", format!("{beta} not in (1, 2)")))
    }
}

/// L1 weights for the Caputo derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalWeights {
    /// `l_0, ..., l_{N-1}`: first column of `T`.
    pub l: Vec<f64>,
    /// `l^(n)` for `n = 1..=N`, the coefficients of the initial value.
    pub l_init: Vec<f64>,
    pub mu: f64,
    pub alpha: f64,
}

/// L1 quadrature weights for `N` steps of size `mu`.
pub fn l1_weights(alpha: f64, n: usize, mu: f64) -> Result<TemporalWeights> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(Error::param("n_time", "need at least one time step"));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::param("mu", format!("{mu} is not a positive step")));
    }
    let scale = 1.0 / (gamma(2.0 - alpha) * mu.powf(alpha));
    let pow: Vec<f64> = (0..=n).map(|k| (k as f64).powf(1.0 - alpha)).collect();

    let mut l = Vec::with_capacity(n);
    l.push(scale);
    for k in 1..n {
        l.push(scale * (pow[k + 1] - 2.0 * pow[k] + pow[k - 1]));
    }
    let l_init = (1..=n).map(|k| scale * (pow[k - 1] - pow[k])).collect();
    Ok(TemporalWeights { l, l_init, mu, alpha })
}

/// Generating sequence of the symmetric Toeplitz matrix `W_m` for one
/// direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    pub w: Vec<f64>,
    pub beta: f64,
    pub scheme: SpatialScheme,
}

impl SpatialWeights {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// First `m` weights of `scheme` for order `beta`.
pub fn spatial_weights(scheme: SpatialScheme, beta: f64, m: usize) -> Result<SpatialWeights> {
    check_beta(beta)?;
    if m == 0 {
        return Err(Error::param("m", "need at least one weight"));
    }
    let w = match scheme {
        SpatialScheme::CelikDuman => celik_duman(beta, m),
        SpatialScheme::ShiftedGrunwald => {
            let g = grunwald_coefficients(beta, m + 1);
            let gamma_b = -1.0 / (2.0 * (beta * PI / 2.0).cos());
            assemble_shifted(&g, m, gamma_b)
        }
        SpatialScheme::WeightedShifted => {
            let p = weighted_shifted_coefficients(beta, m + 1);
            let gamma_b = -1.0 / (2.0 * (beta * PI / 2.0).cos() * gamma(4.0 - beta));
            assemble_shifted(&p, m, gamma_b)
        }
    };
    Ok(SpatialWeights { w, beta, scheme })
}

fn celik_duman(beta: f64, m: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(m);
    w.push(gamma(beta + 1.0) / gamma(beta / 2.0 + 1.0).powi(2));
    for k in 0..m - 1 {
        let ratio = 1.0 - (beta + 1.0) / (beta / 2.0 + k as f64 + 1.0);
        w.push(ratio * w[k]);
    }
    w
}

/// `w_0 = 2c_1`, `w_1 = c_0 + c_2`, `w_k = c_{k+1}`, all scaled by `factor`.
/// Needs `c` of length at least `m + 1`.
fn assemble_shifted(c: &[f64], m: usize, factor: f64) -> Vec<f64> {
    (0..m)
        .map(|k| {
            let raw = match k {
                0 => 2.0 * c[1],
                1 => c[0] + c[2],
                _ => c[k + 1],
            };
            factor * raw
        })
        .collect()
}

/// Grünwald coefficients `g_0 = -1`, `g_{k+1} = (1 - (beta+1)/(k+1)) g_k`,
/// indices `0..=last`.
pub fn grunwald_coefficients(beta: f64, last: usize) -> Vec<f64> {
    let mut g = Vec::with_capacity(last + 1);
    g.push(-1.0);
    for k in 0..last {
        g.push((1.0 - (beta + 1.0) / (k as f64 + 1.0)) * g[k]);
    }
    g
}

// Below this index the fourth difference is evaluated as written; above it
// the cancellation between the five powers loses too many digits and an
// asymptotic expansion in 1/k takes over.
const SERIES_FROM: usize = 32;

/// Coefficients `p_0..=p_last` of the weighted and shifted scheme.
pub fn weighted_shifted_coefficients(beta: f64, last: usize) -> Vec<f64> {
    let s = 3.0 - beta;
    let pw = |x: f64| if x == 0.0 { 0.0 } else { x.powf(s) };
    (0..=last)
        .map(|k| match k {
            0 => -1.0,
            1 => 4.0 - pw(2.0),
            2 => -pw(3.0) + 4.0 * pw(2.0) - 6.0,
            k if k < SERIES_FROM => {
                let k = k as f64;
                -pw(k + 1.0) + 4.0 * pw(k) - 6.0 * pw(k - 1.0) + 4.0 * pw(k - 2.0) - pw(k - 3.0)
            }
            k => -central_fourth_difference_series(s, (k - 1) as f64),
        })
        .collect()
}

/// `f(x+2) - 4f(x+1) + 6f(x) - 4f(x-1) + f(x-2)` for `f(t) = t^s`, via the
/// binomial expansion of `(x + j)^s`. Only even powers `n >= 4` survive,
/// each with moment `2^(n+1) - 8`. Converges for `x > 2`.
fn central_fourth_difference_series(s: f64, x: f64) -> f64 {
    let inv = 1.0 / x;
    let mut binom = 1.0;
    let mut inv_pow = 1.0;
    let mut two_pow = 2.0;
    let mut sum = 0.0;
    for n in 1..200 {
        binom *= (s - (n - 1) as f64) / n as f64;
        inv_pow *= inv;
        two_pow *= 2.0;
        if n >= 4 && n % 2 == 0 {
            let term = binom * (two_pow - 8.0) * inv_pow;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
    }
    x.powf(s) * sum
}

/// Outcome of checking the three clauses of the weight property.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    /// `w_0 > 0` and `w_k <= 0` for `k >= 1`.
    pub sign_pattern: bool,
    /// The prefix minimum below is strictly positive.
    pub scaled_sum_positive: bool,
    /// `w_k <= w_{k+1}` for `k >= 1`.
    pub monotone_tail: bool,
    /// `min_{1 <= m' <= m} (m'+1)^beta (w_0 + 2 sum_{k=1}^{m'-1} w_k)`.
    pub prefix_min: f64,
    /// The `m'` attaining `prefix_min`.
    pub prefix_argmin: usize,
}

impl PropertyReport {
    pub fn all_pass(&self) -> bool {
        self.sign_pattern && self.scaled_sum_positive && self.monotone_tail
    }
}

/// Checks the weight property on the available prefix of `w`.
pub fn verify_weight_properties(w: &SpatialWeights) -> PropertyReport {
    let v = &w.w;
    let sign_pattern = v.first().is_some_and(|&w0| w0 > 0.0) && v.iter().skip(1).all(|&x| x <= 0.0);
    let monotone_tail = v.windows(2).skip(1).all(|p| p[0] <= p[1]);

    let mut prefix_min = f64::INFINITY;
    let mut prefix_argmin = 0;
    let mut tail = 0.0;
    for m in 1..=v.len() {
        if m >= 2 {
            tail += v[m - 1];
        }
        let value = ((m + 1) as f64).powf(w.beta) * (v[0] + 2.0 * tail);
        if value < prefix_min {
            prefix_min = value;
            prefix_argmin = m;
        }
    }
    PropertyReport {
        sign_pattern,
        scaled_sum_positive: prefix_min > 0.0,
        monotone_tail,
        prefix_min,
        prefix_argmin,
    }
}
