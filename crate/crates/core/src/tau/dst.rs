//! Orthonormal type-I discrete sine transform.

use std::f64::consts::PI;
use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{RealFftPlanner, RealToComplex};

use crate::error::{check_len, Error, Result};

/// Below this size the transform is a dense matrix product.
const DIRECT_BELOW: usize = 16;

/// Entry `(j, k)` (one-based) of `S_m = sqrt(2/(m+1)) sin(pi j k / (m+1))`.
pub fn sine_matrix_entry(m: usize, j: usize, k: usize) -> f64 {
    // Reduce j*k modulo the period 2(m+1) before scaling to keep the
    // argument small.
    let r = (j * k) % (2 * (m + 1));
    (2.0 / (m + 1) as f64).sqrt() * (PI * r as f64 / (m + 1) as f64).sin()
}

/// Plan for multiplying by the symmetric orthogonal matrix `S_m`.
///
/// `S_m` is its own inverse, so applying the plan twice returns the input.
#[derive(Clone)]
pub struct SineTransformPlan {
    m: usize,
    scale: f64,
    kind: PlanKind,
}

#[derive(Clone)]
enum PlanKind {
    Dense(Vec<f64>),
    // Odd extension to length 2(m+1), real-input FFT.
    Fft(Arc<dyn RealToComplex<f64>>),
}

pub struct DstScratch {
    real: Vec<f64>,
    spec: Vec<Complex<f64>>,
    work: Vec<Complex<f64>>,
}

impl SineTransformPlan {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::param("m", "sine transform of size zero"));
        }
        let scale = (2.0 / (m + 1) as f64).sqrt();
        let kind = if m < DIRECT_BELOW {
            let mut mat = Vec::with_capacity(m * m);
            for j in 1..=m {
                for k in 1..=m {
                    mat.push(sine_matrix_entry(m, j, k));
                }
            }
            PlanKind::Dense(mat)
        } else {
            let mut planner = RealFftPlanner::<f64>::new();
            PlanKind::Fft(planner.plan_fft_forward(2 * (m + 1)))
        };
        Ok(SineTransformPlan { m, scale, kind })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    /// The normalization `sqrt(2/(m+1))`.
    pub fn normalization(&self) -> f64 {
        self.scale
    }

    /// `S_m v`.
    pub fn dst(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.m, v.len())?;
        let mut out = v.to_vec();
        let mut s = self.scratch();
        self.apply_in_place(&mut out, &mut s);
        Ok(out)
    }

    pub fn scratch(&self) -> DstScratch {
        match &self.kind {
            PlanKind::Dense(_) => DstScratch {
                real: vec![0.0; self.m],
                spec: Vec::new(),
                work: Vec::new(),
            },
            PlanKind::Fft(fft) => DstScratch {
                real: fft.make_input_vec(),
                spec: fft.make_output_vec(),
                work: fft.make_scratch_vec(),
            },
        }
    }

    pub fn apply_in_place(&self, line: &mut [f64], s: &mut DstScratch) {
        let m = self.m;
        debug_assert_eq!(line.len(), m);
        match &self.kind {
            PlanKind::Dense(mat) => {
                s.real.copy_from_slice(line);
                for (j, out) in line.iter_mut().enumerate() {
                    let row = &mat[j * m..(j + 1) * m];
                    *out = row.iter().zip(&s.real).map(|(a, b)| a * b).sum();
                }
            }
            PlanKind::Fft(fft) => {
                let len = 2 * (m + 1);
                s.real[0] = 0.0;
                s.real[m + 1] = 0.0;
                for (j, &v) in line.iter().enumerate() {
                    s.real[j + 1] = v;
                    s.real[len - j - 1] = -v;
                }
                fft.process_with_scratch(&mut s.real, &mut s.spec, &mut s.work)
                    .expect("buffer sizes come from the plan");
                let factor = -0.5 * self.scale;
                for (k, out) in line.iter_mut().enumerate() {
                    *out = factor * s.spec[k + 1].im;
                }
            }
        }
    }
}
