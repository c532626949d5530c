//! Morlet continuous wavelet transform.
//!
//! Follows the usual frequency-domain construction: the mean-removed series
//! is zero padded to a power of two, multiplied by the analytic Morlet
//! filter at every scale and brought back with an inverse FFT. Scales are
//! energy normalized, so a sinusoid peaks at the scale whose Fourier period
//! matches its own.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::signals::MIN_SAMPLES;

pub const MORLET_OMEGA0: f64 = 6.0;

/// Ratio between a Morlet scale and its equivalent Fourier period.
pub fn fourier_factor() -> f64 {
    4.0 * PI / (MORLET_OMEGA0 + (2.0 + MORLET_OMEGA0 * MORLET_OMEGA0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveletParams {
    /// Scale spacing in octaves.
    pub dj: f64,
    /// Restricts the transform to the canonical scales whose periods fall in
    /// this interval. The canonical grid always starts at `4/fs` and ends at
    /// `duration/4`, so a restricted transform equals the corresponding rows
    /// of the full one.
    pub period_range: Option<(f64, f64)>,
}

impl Default for WaveletParams {
    fn default() -> Self {
        WaveletParams {
            dj: 1.0 / 12.0,
            period_range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletSpectrum {
    /// Scales × time.
    pub coefficients: Vec<Vec<Complex64>>,
    pub scales: Vec<f64>,
    pub periods: Vec<f64>,
    pub fs: f64,
    /// Largest period unaffected by edge effects at each time index.
    pub coi: Vec<f64>,
}

impl WaveletSpectrum {
    pub fn n_times(&self) -> usize {
        self.coi.len()
    }

    /// Whether `(scale, t)` lies outside the cone of influence.
    #[inline]
    pub fn is_valid(&self, scale: usize, t: usize) -> bool {
        self.periods[scale] <= self.coi[t]
    }
}

/// A reusable transform for a fixed series length and sampling rate.
pub struct Cwt {
    n: usize,
    fs: f64,
    scales: Vec<f64>,
    periods: Vec<f64>,
    coi: Vec<f64>,
    filters: Vec<Vec<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Cwt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cwt")
            .field("n", &self.n)
            .field("fs", &self.fs)
            .field("scales", &self.scales.len())
            .finish()
    }
}

impl Cwt {
    pub fn new(n: usize, fs: f64, params: &WaveletParams) -> Result<Self> {
        ensure!(n >= MIN_SAMPLES, Validation, "series has {n} samples, need at least {MIN_SAMPLES}");
        ensure!(fs.is_finite() && fs > 0.0, Validation, "fs must be positive, got {fs}");
        ensure!(
            params.dj.is_finite() && params.dj > 0.0,
            Validation,
            "dj must be positive, got {}",
            params.dj
        );

        let dt = 1.0 / fs;
        let ff = fourier_factor();
        let min_period = 2.0 * dt * 2.0;
        let max_period = n as f64 * dt / 4.0;
        let n_scales = ((max_period / min_period).log2() / params.dj).floor() as usize + 1;
        let s0 = min_period / ff;
        let (lo, hi) = params.period_range.unwrap_or((0.0, f64::INFINITY));
        let scales: Vec<f64> = (0..n_scales)
            .map(|j| s0 * 2f64.powf(j as f64 * params.dj))
            .filter(|s| {
                let p = s * ff;
                p >= lo * (1.0 - 1e-12) && p <= hi * (1.0 + 1e-12)
            })
            .collect();
        ensure!(
            !scales.is_empty(),
            Validation,
            "no wavelet scales fall in the period range {lo}..{hi} s"
        );
        let periods = scales.iter().map(|s| s * ff).collect();

        let npad = (2 * n).next_power_of_two();
        let omega = |k: usize| -> f64 {
            let k = if k <= npad / 2 { k as f64 } else { k as f64 - npad as f64 };
            2.0 * PI * k / (npad as f64 * dt)
        };
        let norm = PI.powf(-0.25) / npad as f64;
        let filters = scales
            .iter()
            .map(|&s| {
                let amp = (2.0 * PI * s / dt).sqrt() * norm;
                (0..npad)
                    .map(|k| {
                        let w = omega(k);
                        if w > 0.0 {
                            amp * (-0.5 * (s * w - MORLET_OMEGA0).powi(2)).exp()
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();

        let coi = (0..n)
            .map(|t| ff / 2f64.sqrt() * dt * (t + 1).min(n - t) as f64)
            .collect();

        let mut planner = FftPlanner::new();
        Ok(Cwt {
            n,
            fs,
            scales,
            periods,
            coi,
            filters,
            forward: planner.plan_fft_forward(npad),
            inverse: planner.plan_fft_inverse(npad),
        })
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn transform(&self, x: &[f64]) -> Result<WaveletSpectrum> {
        ensure!(
            x.len() == self.n,
            Validation,
            "series has {} samples, transform was planned for {}",
            x.len(),
            self.n
        );
        ensure!(x.iter().all(|v| v.is_finite()), Validation, "series contains non-finite samples");

        let npad = self.filters[0].len();
        let mean = x.iter().sum::<f64>() / self.n as f64;
        let mut spectrum = vec![Complex64::new(0.0, 0.0); npad];
        for (dst, v) in spectrum.iter_mut().zip(x) {
            dst.re = v - mean;
        }
        self.forward.process(&mut spectrum);

        let mut buf = vec![Complex64::new(0.0, 0.0); npad];
        let coefficients = self
            .filters
            .iter()
            .map(|filter| {
                for ((b, s), f) in buf.iter_mut().zip(&spectrum).zip(filter) {
                    *b = s * f;
                }
                self.inverse.process(&mut buf);
                buf[..self.n].to_vec()
            })
            .collect();

        Ok(WaveletSpectrum {
            coefficients,
            scales: self.scales.clone(),
            periods: self.periods.clone(),
            fs: self.fs,
            coi: self.coi.clone(),
        })
    }
}

/// One-shot transform; see [`Cwt`] to amortize planning over many series.
pub fn cwt(x: &[f64], fs: f64, params: &WaveletParams) -> Result<WaveletSpectrum> {
    Cwt::new(x.len(), fs, params)?.transform(x)
}
