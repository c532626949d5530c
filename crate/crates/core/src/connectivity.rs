//! Interpersonal synchrony estimators on pairs of wavelet spectra.
//!
//! All three estimators only use `(scale, time)` cells outside the cone of
//! influence and only scales whose period lies in the requested band.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::signals::{Chromophore, DyadRecording, RecordKey};
use crate::wavelet::{Cwt, WaveletParams, WaveletSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "WCO")]
    Wco,
    #[serde(rename = "PLV")]
    Plv,
    #[serde(rename = "ENTROPY")]
    Entropy,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Wco, Estimator::Plv, Estimator::Entropy];
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Wco => "WCO",
            Estimator::Plv => "PLV",
            Estimator::Entropy => "ENTROPY",
        })
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "WCO" => Ok(Estimator::Wco),
            "PLV" => Ok(Estimator::Plv),
            "ENTROPY" => Ok(Estimator::Entropy),
            other => Err(Error::Validation(format!("unknown estimator {other:?}"))),
        }
    }
}

/// Period interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Band {
    fn default() -> Self {
        Band { lo: 5.0, hi: 20.0 }
    }
}

impl From<[f64; 2]> for Band {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Band { lo, hi }
    }
}

impl From<Band> for [f64; 2] {
    fn from(b: Band) -> Self {
        [b.lo, b.hi]
    }
}

impl Band {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.lo.is_finite() && self.hi.is_finite() && 0.0 < self.lo && self.lo <= self.hi,
            Validation,
            "invalid period band [{}, {}]",
            self.lo,
            self.hi
        );
        Ok(())
    }

    fn contains(&self, period: f64) -> bool {
        period >= self.lo * (1.0 - 1e-12) && period <= self.hi * (1.0 + 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyBins {
    /// `round(exp(0.626 + 0.4 ln(n - 1)))` with `n` the series length.
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LagPooling {
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyOptions {
    pub max_lag_s: f64,
    pub bins: EntropyBins,
    pub pooling: LagPooling,
}

impl Default for EntropyOptions {
    fn default() -> Self {
        EntropyOptions {
            max_lag_s: 4.0,
            bins: EntropyBins::Auto,
            pooling: LagPooling::Max,
        }
    }
}

pub const LAG_GRID_POINTS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConnectivityOptions {
    pub wavelet: WaveletParams,
    pub entropy: EntropyOptions,
}

/// Estimator values between every participant-1 and participant-2 channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrix {
    /// `values[u][v]`: p1 channel `u` against p2 channel `v`.
    pub values: Vec<Vec<f64>>,
    pub estimator: Estimator,
    pub band: Band,
    pub dyad_id: String,
    pub condition_id: String,
    pub chromophore: Chromophore,
    pub label: u8,
}

impl ConnectivityMatrix {
    pub fn n1(&self) -> usize {
        self.values.len()
    }

    pub fn n2(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn key(&self) -> RecordKey {
        RecordKey {
            dyad_id: self.dyad_id.clone(),
            condition_id: self.condition_id.clone(),
            chromophore: self.chromophore,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n2 = self.n2();
        ensure!(self.n1() > 0 && n2 > 0, Validation, "{}: empty connectivity matrix", self.key());
        for row in &self.values {
            ensure!(row.len() == n2, Validation, "{}: ragged connectivity matrix", self.key());
            for &v in row {
                ensure!(
                    v.is_finite() && (0.0..=1.0).contains(&v),
                    Validation,
                    "{}: {} value {v} outside [0, 1]",
                    self.key(),
                    self.estimator
                );
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ConnectivityRecord {
    dyad_id: String,
    condition_id: String,
    chromophore: Chromophore,
    label: u8,
    estimator: Estimator,
    band: Band,
    values: Vec<f64>,
    n1: usize,
    n2: usize,
}

impl Serialize for ConnectivityMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ConnectivityRecord {
            dyad_id: self.dyad_id.clone(),
            condition_id: self.condition_id.clone(),
            chromophore: self.chromophore,
            label: self.label,
            estimator: self.estimator,
            band: self.band,
            values: self.values.iter().flatten().copied().collect(),
            n1: self.n1(),
            n2: self.n2(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConnectivityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ConnectivityRecord::deserialize(d)?;
        if r.n1 * r.n2 != r.values.len() || r.n2 == 0 {
            return Err(serde::de::Error::custom(format!(
                "{} values cannot form a {}x{} matrix",
                r.values.len(),
                r.n1,
                r.n2
            )));
        }
        Ok(ConnectivityMatrix {
            values: r.values.chunks(r.n2).map(<[f64]>::to_vec).collect(),
            estimator: r.estimator,
            band: r.band,
            dyad_id: r.dyad_id,
            condition_id: r.condition_id,
            chromophore: r.chromophore,
            label: r.label,
        })
    }
}

fn check_compatible(wx: &WaveletSpectrum, wy: &WaveletSpectrum) -> Result<()> {
    ensure!(
        wx.fs == wy.fs && wx.n_times() == wy.n_times() && wx.scales == wy.scales,
        Validation,
        "wavelet spectra differ in sampling rate, length or scales"
    );
    Ok(())
}

fn band_rows(w: &WaveletSpectrum, band: &Band) -> Result<Vec<usize>> {
    band.validate()?;
    let rows: Vec<usize> = (0..w.periods.len()).filter(|&i| band.contains(w.periods[i])).collect();
    ensure!(
        !rows.is_empty(),
        Validation,
        "no wavelet scale has a period inside [{}, {}] s",
        band.lo,
        band.hi
    );
    Ok(rows)
}

/// Mean resultant length of a set of phase differences.
pub fn phase_locking<I: IntoIterator<Item = f64>>(phase_diffs: I) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut n = 0usize;
    for d in phase_diffs {
        acc += Complex64::cis(d);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (acc.norm() / n as f64).min(1.0)
    }
}

fn wrap_phase(d: f64) -> f64 {
    let w = (d + PI).rem_euclid(TAU) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// `(ln B − S) / ln B` for the `B`-bin histogram of `phase_diffs` on
/// `[−π, π)`, where `S` is its Shannon entropy. Values are wrapped first.
pub fn phase_entropy_index(phase_diffs: &[f64], bins: usize) -> f64 {
    if bins < 2 || phase_diffs.is_empty() {
        return 0.0;
    }
    let mut counts = vec![0usize; bins];
    for &d in phase_diffs {
        let u = (wrap_phase(d) + PI) / TAU;
        let k = ((u * bins as f64) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let total = phase_diffs.len() as f64;
    let entropy: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    let max = (bins as f64).ln();
    ((max - entropy) / max).clamp(0.0, 1.0)
}

pub fn auto_bins(n_samples: usize) -> usize {
    let n = n_samples.max(2) as f64;
    ((0.626 + 0.4 * (n - 1.0).ln()).exp().round() as usize).max(2)
}

pub fn phase_locking_value(wx: &WaveletSpectrum, wy: &WaveletSpectrum, band: &Band) -> Result<f64> {
    check_compatible(wx, wy)?;
    let rows = band_rows(wx, band)?;
    let n = wx.n_times();
    let per_scale: Vec<f64> = rows
        .iter()
        .filter(|&&i| (0..n).any(|t| wx.is_valid(i, t)))
        .map(|&i| {
            let (x, y) = (&wx.coefficients[i], &wy.coefficients[i]);
            phase_locking((0..n).filter(|&t| wx.is_valid(i, t)).map(|t| x[t].arg() - y[t].arg()))
        })
        .collect();
    ensure!(
        !per_scale.is_empty(),
        Validation,
        "every band scale lies inside the cone of influence"
    );
    Ok(per_scale.iter().sum::<f64>() / per_scale.len() as f64)
}

/// Sample offsets of the symmetric lag grid.
pub fn lag_grid(max_lag_s: f64, fs: f64) -> Vec<isize> {
    (0..LAG_GRID_POINTS)
        .map(|k| {
            let tau = -max_lag_s + 2.0 * max_lag_s * k as f64 / (LAG_GRID_POINTS - 1) as f64;
            (tau * fs).round() as isize
        })
        .collect()
}

/// Entropy index at every point of the lag grid, in grid order. Lags with no
/// admissible samples are `None`.
pub fn entropy_by_lag(
    wx: &WaveletSpectrum,
    wy: &WaveletSpectrum,
    band: &Band,
    opts: &EntropyOptions,
) -> Result<Vec<Option<f64>>> {
    check_compatible(wx, wy)?;
    let rows = band_rows(wx, band)?;
    let n = wx.n_times();
    let duration = n as f64 / wx.fs;
    ensure!(
        opts.max_lag_s.is_finite() && opts.max_lag_s >= 0.0,
        Validation,
        "max_lag_s must be non-negative, got {}",
        opts.max_lag_s
    );
    ensure!(
        opts.max_lag_s < duration / 2.0,
        Validation,
        "max_lag_s = {} s must be below half the recording ({duration} s)",
        opts.max_lag_s
    );
    let bins = match opts.bins {
        EntropyBins::Auto => auto_bins(n),
        EntropyBins::Fixed(b) => {
            ensure!(b >= 2, Validation, "need at least 2 histogram bins, got {b}");
            b
        }
    };

    let phase_x: Vec<Vec<f64>> =
        rows.iter().map(|&i| wx.coefficients[i].iter().map(|c| c.arg()).collect()).collect();
    let phase_y: Vec<Vec<f64>> =
        rows.iter().map(|&i| wy.coefficients[i].iter().map(|c| c.arg()).collect()).collect();

    let mut diffs = Vec::new();
    Ok(lag_grid(opts.max_lag_s, wx.fs)
        .into_iter()
        .map(|lag| {
            diffs.clear();
            for (r, &i) in rows.iter().enumerate() {
                for t in 0..n {
                    let Some(u) = t.checked_add_signed(lag).filter(|&u| u < n) else {
                        continue;
                    };
                    if wx.is_valid(i, t) && wx.is_valid(i, u) {
                        diffs.push(phase_x[r][t] - phase_y[r][u]);
                    }
                }
            }
            (!diffs.is_empty()).then(|| phase_entropy_index(&diffs, bins))
        })
        .collect())
}

pub fn entropy_sync(
    wx: &WaveletSpectrum,
    wy: &WaveletSpectrum,
    band: &Band,
    opts: &EntropyOptions,
) -> Result<f64> {
    let per_lag: Vec<f64> = entropy_by_lag(wx, wy, band, opts)?.into_iter().flatten().collect();
    ensure!(
        !per_lag.is_empty(),
        Validation,
        "no admissible samples at any lag outside the cone of influence"
    );
    Ok(match opts.pooling {
        LagPooling::Max => per_lag.iter().copied().fold(0.0, f64::max),
        LagPooling::Mean => per_lag.iter().sum::<f64>() / per_lag.len() as f64,
    })
}

/// Time and scale smoothing used by wavelet coherence: a Gaussian in time
/// with standard deviation equal to the scale, then a boxcar spanning 0.6
/// octaves of neighbouring scales.
struct CoherencePlan {
    band_rows: Vec<usize>,
    /// Rows that must be time-smoothed (band rows plus their scale windows).
    needed: Vec<usize>,
    /// For each band row, the range into `needed` it averages over.
    windows: Vec<std::ops::Range<usize>>,
    kernels: Vec<Vec<Complex64>>,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

const SCALE_WINDOW_OCTAVES: f64 = 0.6;

impl CoherencePlan {
    fn new(w: &WaveletSpectrum, band: &Band) -> Result<Self> {
        let band_rows = band_rows(w, band)?;
        let n = w.n_times();
        let n_scales = w.scales.len();
        let half = if n_scales > 1 {
            let dj = (w.scales[1] / w.scales[0]).log2();
            (0.5 * SCALE_WINDOW_OCTAVES / dj + 1e-9).floor() as usize
        } else {
            0
        };
        let lo = band_rows[0].saturating_sub(half);
        let hi = (band_rows[band_rows.len() - 1] + half).min(n_scales - 1);
        let needed: Vec<usize> = (lo..=hi).collect();
        let windows = band_rows
            .iter()
            .map(|&i| {
                let a = i.saturating_sub(half).max(lo) - lo;
                let b = (i + half).min(hi) - lo + 1;
                a..b
            })
            .collect();

        let sigmas: Vec<f64> = needed.iter().map(|&j| w.scales[j] * w.fs).collect();
        let reach = |s: f64| (3.0 * s).ceil().max(1.0) as usize;
        let max_reach = sigmas.iter().map(|&s| reach(s)).max().unwrap_or(1);
        let m = (n + max_reach + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let kernels = sigmas
            .iter()
            .map(|&sigma| {
                let k = reach(sigma) as isize;
                let weights: Vec<f64> = (-k..=k)
                    .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
                    .collect();
                let total: f64 = weights.iter().sum();
                let mut kernel = vec![Complex64::new(0.0, 0.0); m];
                for (i, wgt) in (-k..=k).zip(&weights) {
                    kernel[i.rem_euclid(m as isize) as usize].re = wgt / (total * m as f64);
                }
                forward.process(&mut kernel);
                kernel
            })
            .collect();
        Ok(CoherencePlan {
            band_rows,
            needed,
            windows,
            kernels,
            n,
            forward,
            inverse,
        })
    }

    fn smooth_time(&self, k: usize, data: impl Iterator<Item = Complex64>) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.kernels[k].len()];
        for (b, v) in buf.iter_mut().zip(data) {
            *b = v;
        }
        self.forward.process(&mut buf);
        for (b, g) in buf.iter_mut().zip(&self.kernels[k]) {
            *b *= g;
        }
        self.inverse.process(&mut buf);
        buf.truncate(self.n);
        buf
    }

    fn smooth_scale<T: Copy + Default + std::ops::AddAssign + std::ops::Div<f64, Output = T>>(
        &self,
        rows: &[Vec<T>],
    ) -> Vec<Vec<T>> {
        self.windows
            .iter()
            .map(|win| {
                let mut acc = vec![T::default(); self.n];
                for row in &rows[win.clone()] {
                    for (a, &v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                let len = win.len() as f64;
                acc.into_iter().map(|a| a / len).collect()
            })
            .collect()
    }

    /// Scale- and time-smoothed `|W|² / s` on the band rows.
    fn power(&self, w: &WaveletSpectrum) -> Vec<Vec<f64>> {
        let rows: Vec<Vec<f64>> = self
            .needed
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                let s = w.scales[j];
                self.smooth_time(
                    k,
                    w.coefficients[j].iter().map(|c| Complex64::new(c.norm_sqr() / s, 0.0)),
                )
                .into_iter()
                .map(|c| c.re.max(0.0))
                .collect()
            })
            .collect();
        self.smooth_scale(&rows)
    }

    fn coherence(
        &self,
        wx: &WaveletSpectrum,
        wy: &WaveletSpectrum,
        px: &[Vec<f64>],
        py: &[Vec<f64>],
    ) -> Result<f64> {
        let rows: Vec<Vec<Complex64>> = self
            .needed
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                let s = wx.scales[j];
                let (x, y) = (&wx.coefficients[j], &wy.coefficients[j]);
                self.smooth_time(k, x.iter().zip(y).map(|(a, b)| a * b.conj() / s))
            })
            .collect();
        let cross = self.smooth_scale(&rows);

        let mut sum = 0.0;
        let mut count = 0usize;
        for (r, &i) in self.band_rows.iter().enumerate() {
            for t in (0..self.n).filter(|&t| wx.is_valid(i, t)) {
                let denom = px[r][t] * py[r][t];
                let r2 = if denom > 0.0 {
                    cross[r][t].norm_sqr() / denom
                } else {
                    0.0
                };
                debug_assert!(r2 <= 1.0 + 1e-9, "coherence overshoot {r2}");
                sum += r2.min(1.0);
                count += 1;
            }
        }
        ensure!(count > 0, Validation, "every band scale lies inside the cone of influence");
        Ok(sum / count as f64)
    }
}

/// Mean squared wavelet coherence over the band and the valid times.
pub fn wavelet_coherence(wx: &WaveletSpectrum, wy: &WaveletSpectrum, band: &Band) -> Result<f64> {
    check_compatible(wx, wy)?;
    let plan = CoherencePlan::new(wx, band)?;
    let px = plan.power(wx);
    let py = plan.power(wy);
    plan.coherence(wx, wy, &px, &py)
}

/// All requested estimators for one recording, sharing the wavelet
/// transforms. Output order follows `estimators`.
pub fn connectivity_matrices(
    rec: &DyadRecording,
    estimators: &[Estimator],
    band: &Band,
    opts: &ConnectivityOptions,
) -> Result<Vec<ConnectivityMatrix>> {
    rec.validate()?;
    band.validate()?;
    // Half an octave beyond the band leaves room for the coherence scale window.
    let params = WaveletParams {
        period_range: Some((band.lo / 2f64.sqrt(), band.hi * 2f64.sqrt())),
        ..opts.wavelet
    };
    let cwt = Cwt::new(rec.n_samples(), rec.fs, &params)?;
    let sx: Vec<WaveletSpectrum> = rec.p1.iter().map(|c| cwt.transform(c)).collect::<Result<_>>()?;
    let sy: Vec<WaveletSpectrum> = rec.p2.iter().map(|c| cwt.transform(c)).collect::<Result<_>>()?;

    let plan = if estimators.contains(&Estimator::Wco) {
        let plan = CoherencePlan::new(&sx[0], band)?;
        let px: Vec<_> = sx.iter().map(|w| plan.power(w)).collect();
        let py: Vec<_> = sy.iter().map(|w| plan.power(w)).collect();
        Some((plan, px, py))
    } else {
        None
    };

    estimators
        .iter()
        .map(|&est| {
            let values = sx
                .iter()
                .enumerate()
                .map(|(u, wx)| {
                    sy.iter()
                        .enumerate()
                        .map(|(v, wy)| match est {
                            Estimator::Wco => {
                                let (plan, px, py) = plan.as_ref().expect("planned above");
                                plan.coherence(wx, wy, &px[u], &py[v])
                            }
                            Estimator::Plv => phase_locking_value(wx, wy, band),
                            Estimator::Entropy => entropy_sync(wx, wy, band, &opts.entropy),
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let cm = ConnectivityMatrix {
                values,
                estimator: est,
                band: *band,
                dyad_id: rec.dyad_id.clone(),
                condition_id: rec.condition_id.clone(),
                chromophore: rec.chromophore,
                label: rec.label,
            };
            cm.validate()?;
            Ok(cm)
        })
        .collect()
}

pub fn connectivity_matrix(
    rec: &DyadRecording,
    estimator: Estimator,
    band: &Band,
    opts: &ConnectivityOptions,
) -> Result<ConnectivityMatrix> {
    Ok(connectivity_matrices(rec, &[estimator], band, opts)?.remove(0))
}

/// Connectivity for many recordings in parallel; one inner vector per
/// recording, in `estimators` order.
pub fn cohort_connectivity(
    recs: &[DyadRecording],
    estimators: &[Estimator],
    band: &Band,
    opts: &ConnectivityOptions,
) -> Result<Vec<Vec<ConnectivityMatrix>>> {
    recs.par_iter()
        .map(|r| connectivity_matrices(r, estimators, band, opts))
        .collect()
}
