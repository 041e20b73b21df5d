//! Matrix-free operators `T`, `B` and `A = B ⊗ I_N + I_J ⊗ T`.
//!
//! Vectors follow the layout described in [`crate::layout`]. All operators
//! are immutable after construction; every apply allocates its own scratch,
//! so one operator can be shared across threads.

mod toeplitz;

pub(crate) use toeplitz::Circulant;
#[cfg(test)]
pub(crate) use toeplitz::lower_toeplitz_direct;

use rayon::prelude::*;

use crate::discretization::{ProblemSpec, SpatialWeights, TemporalWeights};
use crate::error::{check_len, Error, Result};
use crate::layout::{axis_geometry, for_each_line};
use toeplitz::{LowerToeplitz, SymmetricToeplitz};

/// The lower-triangular Toeplitz matrix `T` of the L1 scheme.
#[derive(Clone)]
pub struct TemporalOperator {
    matrix: LowerToeplitz,
    column: Vec<f64>,
}

impl TemporalOperator {
    /// Builds `T` from its first column; the diagonal entry must be positive.
    pub fn new(column: Vec<f64>) -> Result<Self> {
        match column.first() {
            Some(&l0) if l0 > 0.0 && l0.is_finite() => {}
            _ => return Err(Error::param("column", "need a positive leading entry")),
        }
        if column.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("temporal weights"));
        }
        Ok(TemporalOperator {
            matrix: LowerToeplitz::new(column.clone()),
            column,
        })
    }

    pub fn from_weights(weights: &TemporalWeights) -> Result<Self> {
        Self::new(weights.l.clone())
    }

    /// Number of time levels `N`.
    pub fn len(&self) -> usize {
        self.column.len()
    }

    pub fn is_empty(&self) -> bool {
        self.column.is_empty()
    }

    pub fn column(&self) -> &[f64] {
        &self.column
    }

    pub fn diagonal(&self) -> f64 {
        self.column[0]
    }

    /// `T v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.len(), v.len())?;
        check_len(self.len(), out.len())?;
        let mut s = self.matrix.scratch();
        self.matrix.apply(v, out, s.as_mut());
        Ok(())
    }

    /// `out = (I_J ⊗ T) v` for `v` made of contiguous time blocks.
    pub(crate) fn apply_blocks(&self, v: &[f64], out: &mut [f64]) {
        let n = self.len();
        out.par_chunks_mut(n)
            .zip(v.par_chunks(n))
            .for_each_init(
                || self.matrix.scratch(),
                |s, (o, x)| self.matrix.apply(x, o, s.as_mut()),
            );
    }
}

/// The spatial matrix `B = sum_i eta_i I ⊗ W_{m_i} ⊗ I`.
pub struct SpatialOperator {
    dims: Vec<usize>,
    eta: Vec<f64>,
    weights: Vec<SpatialWeights>,
    factors: Vec<SymmetricToeplitz>,
}

impl SpatialOperator {
    /// `weights[i]` must hold exactly `m_i` entries; `eta[i] > 0`.
    pub fn new(weights: Vec<SpatialWeights>, eta: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != eta.len() {
            return Err(Error::param("eta", "one scaling per direction is required"));
        }
        if eta.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::param("eta", "scalings must be positive"));
        }
        if weights.iter().any(|w| w.is_empty()) {
            return Err(Error::param("weights", "empty weight sequence"));
        }
        let dims = weights.iter().map(SpatialWeights::len).collect();
        let factors = weights
            .iter()
            .map(|w| SymmetricToeplitz::new(w.w.clone()))
            .collect();
        Ok(SpatialOperator {
            dims,
            eta,
            weights,
            factors,
        })
    }

    pub fn from_spec(spec: &ProblemSpec) -> Result<Self> {
        spec.validate()?;
        Self::new(spec.spatial_weights()?, spec.etas())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn weights(&self) -> &[SpatialWeights] {
        &self.weights
    }

    /// `J`.
    pub fn num_spatial(&self) -> usize {
        self.dims.iter().product()
    }

    /// `B v` for a purely spatial vector of length `J`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.num_spatial(), v.len())?;
        let mut out = vec![0.0; v.len()];
        self.apply_kron_add(v, 1, &mut out);
        Ok(out)
    }

    /// `out += (B ⊗ I_n) v`.
    pub(crate) fn apply_kron_add(&self, v: &[f64], n: usize, out: &mut [f64]) {
        let mut shape = self.dims.clone();
        shape.push(n);
        let mut line_data = vec![0.0; v.len()];
        for (axis, factor) in self.factors.iter().enumerate() {
            line_data.copy_from_slice(v);
            let (len, inner) = axis_geometry(&shape, axis);
            for_each_line(
                &mut line_data,
                len,
                inner,
                || factor.scratch(),
                |s, line| factor.apply_in_place(line, s),
            );
            let eta = self.eta[axis];
            out.par_iter_mut()
                .zip(line_data.par_iter())
                .for_each(|(o, x)| *o += eta * x);
        }
    }
}

/// The all-at-once matrix `A = B ⊗ I_N + I_J ⊗ T`.
pub struct AllAtOnceOperator {
    pub temporal: TemporalOperator,
    pub spatial: SpatialOperator,
}

impl AllAtOnceOperator {
    pub fn new(temporal: TemporalOperator, spatial: SpatialOperator) -> Self {
        AllAtOnceOperator { temporal, spatial }
    }

    pub fn from_spec(spec: &ProblemSpec) -> Result<Self> {
        Ok(Self::new(
            TemporalOperator::from_weights(&spec.temporal_weights()?)?,
            SpatialOperator::from_spec(spec)?,
        ))
    }

    /// `N * J`.
    pub fn len(&self) -> usize {
        self.temporal.len() * self.spatial.num_spatial()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.len(), v.len())?;
        check_len(self.len(), out.len())?;
        self.temporal.apply_blocks(v, out);
        self.spatial.apply_kron_add(v, self.temporal.len(), out);
        Ok(())
    }
}

/// Right-hand side of the all-at-once system.
///
/// The entry for spatial point `x` and time level `n = 1..=N` is
/// `f(x, n mu) - l^(n) psi(x)`. Sources are sampled at grid nodes.
pub fn assemble_rhs<F, P>(spec: &ProblemSpec, f: F, psi: P) -> Result<Vec<f64>>
where
    F: Fn(&[f64], f64) -> f64 + Sync,
    P: Fn(&[f64]) -> f64 + Sync,
{
    spec.validate()?;
    let weights = spec.temporal_weights()?;
    let n = spec.n_time;
    let mu = spec.time_step();
    let mut rhs = vec![0.0; spec.num_unknowns()];
    rhs.par_chunks_mut(n).enumerate().for_each(|(s, block)| {
        let x = spec.spatial_point(s);
        let initial = psi(&x);
        for (level, entry) in block.iter_mut().enumerate() {
            let t = (level + 1) as f64 * mu;
            *entry = f(&x, t) - weights.l_init[level] * initial;
        }
    });
    Ok(rhs)
}
