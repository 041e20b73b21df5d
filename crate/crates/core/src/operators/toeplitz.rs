//! Toeplitz matrix-vector products by circulant embedding.

use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

/// Below this order a plain O(n^2) product is used.
pub(crate) const DIRECT_BELOW: usize = 32;

/// Smallest power of two that is at least `n`.
pub(crate) fn fft_size(n: usize) -> usize {
    n.next_power_of_two()
}

/// A real circulant of order `len`, stored as the FFT of its first column.
#[derive(Clone)]
pub(crate) struct Circulant {
    len: usize,
    spectrum: Vec<Complex<f64>>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

pub(crate) struct FftScratch {
    real: Vec<f64>,
    spec: Vec<Complex<f64>>,
    work: Vec<Complex<f64>>,
}

impl Circulant {
    pub(crate) fn new(column: Vec<f64>) -> Self {
        Self::with_planner(column, &mut RealFftPlanner::new())
    }

    pub(crate) fn with_planner(mut column: Vec<f64>, planner: &mut RealFftPlanner<f64>) -> Self {
        let len = column.len();
        let r2c = planner.plan_fft_forward(len);
        let c2r = planner.plan_fft_inverse(len);
        let mut spectrum = r2c.make_output_vec();
        r2c.process(&mut column, &mut spectrum)
            .expect("buffer sizes come from the plan");
        let scale = 1.0 / len as f64;
        for z in &mut spectrum {
            *z *= scale;
        }
        Circulant {
            len,
            spectrum,
            r2c,
            c2r,
        }
    }

    pub(crate) fn scratch(&self) -> FftScratch {
        let work = self
            .r2c
            .get_scratch_len()
            .max(self.c2r.get_scratch_len());
        FftScratch {
            real: vec![0.0; self.len],
            spec: vec![Complex::default(); self.len / 2 + 1],
            work: vec![Complex::default(); work],
        }
    }

    /// `y = (C [x; 0])[..y.len()]`.
    pub(crate) fn apply(&self, x: &[f64], y: &mut [f64], s: &mut FftScratch) {
        s.real[..x.len()].copy_from_slice(x);
        s.real[x.len()..].fill(0.0);
        self.r2c
            .process_with_scratch(&mut s.real, &mut s.spec, &mut s.work)
            .expect("buffer sizes come from the plan");
        for (z, k) in s.spec.iter_mut().zip(&self.spectrum) {
            *z *= k;
        }
        // Real kernel times real signal: DC and Nyquist bins are real up to
        // roundoff; the inverse transform insists on exact zeros there.
        s.spec[0].im = 0.0;
        if let Some(last) = s.spec.last_mut() {
            last.im = 0.0;
        }
        self.c2r
            .process_with_scratch(&mut s.spec, &mut s.real, &mut s.work)
            .expect("buffer sizes come from the plan");
        y.copy_from_slice(&s.real[..y.len()]);
    }
}

/// Lower-triangular Toeplitz matrix given by its first column.
#[derive(Clone)]
pub(crate) struct LowerToeplitz {
    column: Vec<f64>,
    circulant: Option<Circulant>,
}

impl LowerToeplitz {
    pub(crate) fn new(column: Vec<f64>) -> Self {
        let n = column.len();
        let circulant = (n >= DIRECT_BELOW).then(|| {
            let mut embedded = column.clone();
            embedded.resize(fft_size(2 * n), 0.0);
            Circulant::new(embedded)
        });
        LowerToeplitz { column, circulant }
    }

    pub(crate) fn scratch(&self) -> Option<FftScratch> {
        self.circulant.as_ref().map(Circulant::scratch)
    }

    pub(crate) fn apply(&self, x: &[f64], y: &mut [f64], s: Option<&mut FftScratch>) {
        match (&self.circulant, s) {
            (Some(c), Some(s)) => c.apply(x, y, s),
            _ => lower_toeplitz_direct(&self.column, x, y),
        }
    }
}

pub(crate) fn lower_toeplitz_direct(column: &[f64], x: &[f64], y: &mut [f64]) {
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = (0..=i).map(|j| column[i - j] * x[j]).sum();
    }
}

/// Symmetric Toeplitz matrix given by its first column.
pub(crate) struct SymmetricToeplitz {
    column: Vec<f64>,
    circulant: Option<Circulant>,
}

impl SymmetricToeplitz {
    pub(crate) fn new(column: Vec<f64>) -> Self {
        let m = column.len();
        let circulant = (m >= DIRECT_BELOW).then(|| {
            // First column, zero padding, then the reflected tail.
            let len = fft_size(2 * m);
            let mut embedded = vec![0.0; len];
            embedded[..m].copy_from_slice(&column);
            for k in 1..m {
                embedded[len - k] = column[k];
            }
            Circulant::new(embedded)
        });
        SymmetricToeplitz { column, circulant }
    }

    pub(crate) fn scratch(&self) -> LineScratch {
        LineScratch {
            fft: self.circulant.as_ref().map(Circulant::scratch),
            copy: vec![0.0; self.column.len()],
        }
    }

    pub(crate) fn apply(&self, x: &[f64], y: &mut [f64], s: &mut LineScratch) {
        match (&self.circulant, s.fft.as_mut()) {
            (Some(c), Some(fs)) => c.apply(x, y, fs),
            _ => symmetric_toeplitz_direct(&self.column, x, y),
        }
    }

    pub(crate) fn apply_in_place(&self, line: &mut [f64], s: &mut LineScratch) {
        let mut copy = std::mem::take(&mut s.copy);
        copy.copy_from_slice(line);
        self.apply(&copy, line, s);
        s.copy = copy;
    }
}

pub(crate) struct LineScratch {
    fft: Option<FftScratch>,
    copy: Vec<f64>,
}

pub(crate) fn symmetric_toeplitz_direct(column: &[f64], x: &[f64], y: &mut [f64]) {
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = x.iter().enumerate().map(|(j, xj)| column[i.abs_diff(j)] * xj).sum();
    }
}
