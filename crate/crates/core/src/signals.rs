//! Synthetic dyadic cohorts.
//!
//! Each participant channel is a slow oscillator (two sinusoids in the
//! 0.05–0.2 Hz band whose phases follow independent random walks). The
//! participant-2 channel paired with a participant-1 channel receives a
//! concurrent linear copy and a lagged, pointwise-nonlinear copy of it, with
//! strengths taken from the class coupling profile.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::seed::{derive_seed, rng_for};

/// Minimum series length accepted by the wavelet estimators.
pub const MIN_SAMPLES: usize = 256;

const OSC_BAND_HZ: (f64, f64) = (0.05, 0.2);
/// Standard deviation of the phase random walk, in rad per sqrt(second).
const PHASE_DRIFT: f64 = 1.0;
const OSC_WHITE_NOISE: f64 = 0.1;
const HBR_SCALE: f64 = -0.4;
const JITTER: (f64, f64) = (0.8, 1.2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Chromophore {
    #[serde(rename = "HBO")]
    Hbo,
    #[serde(rename = "HBR")]
    Hbr,
}

impl fmt::Display for Chromophore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Chromophore::Hbo => "HBO",
            Chromophore::Hbr => "HBR",
        })
    }
}

impl std::str::FromStr for Chromophore {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "HBO" => Ok(Chromophore::Hbo),
            "HBR" => Ok(Chromophore::Hbr),
            other => Err(Error::Validation(format!("unknown chromophore {other:?}"))),
        }
    }
}

/// Identifies one recording, and therefore one graph and one embedding row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordKey {
    pub dyad_id: String,
    pub condition_id: String,
    pub chromophore: Chromophore,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.dyad_id, self.condition_id, self.chromophore)
    }
}

/// Two simultaneously recorded multichannel series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadRecording {
    pub dyad_id: String,
    /// 1 = ASD-like, 0 = control.
    pub label: u8,
    pub condition_id: String,
    pub chromophore: Chromophore,
    pub fs: f64,
    /// Participant 1, one inner vector per channel.
    pub p1: Vec<Vec<f64>>,
    /// Participant 2, same shape as `p1`.
    pub p2: Vec<Vec<f64>>,
}

impl DyadRecording {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            dyad_id: self.dyad_id.clone(),
            condition_id: self.condition_id.clone(),
            chromophore: self.chromophore,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.p1.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.fs
    }

    pub fn validate(&self) -> Result<()> {
        let key = self.key();
        ensure!(self.label <= 1, Validation, "{key}: label must be 0 or 1, got {}", self.label);
        ensure!(
            self.fs.is_finite() && self.fs > 0.0,
            Validation,
            "{key}: sampling rate must be positive, got {}",
            self.fs
        );
        ensure!(!self.p1.is_empty(), Validation, "{key}: participant 1 has no channels");
        ensure!(
            self.p1.len() == self.p2.len(),
            Validation,
            "{key}: participants have {} and {} channels",
            self.p1.len(),
            self.p2.len()
        );
        let n = self.n_samples();
        for (who, chans) in [("p1", &self.p1), ("p2", &self.p2)] {
            for (c, ch) in chans.iter().enumerate() {
                ensure!(
                    ch.len() == n,
                    Validation,
                    "{key}: {who} channel {} has {} samples, expected {n}",
                    c + 1,
                    ch.len()
                );
                if let Some(t) = ch.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Validation(format!(
                        "{key}: {who} channel {} sample {t} is not finite",
                        c + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Coupling strengths applied to the paired channels of one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingProfile {
    pub concurrent_strength: f64,
    pub lagged_strength: f64,
    pub lag_s: f64,
    pub nonlinearity: f64,
}

impl CouplingProfile {
    pub const UNCOUPLED: CouplingProfile = CouplingProfile {
        concurrent_strength: 0.0,
        lagged_strength: 0.0,
        lag_s: 0.0,
        nonlinearity: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.concurrent_strength,
            self.lagged_strength,
            self.lag_s,
            self.nonlinearity,
        ];
        ensure!(
            vals.iter().all(|v| v.is_finite()),
            Validation,
            "coupling profile has non-finite values: {self:?}"
        );
        for (name, v) in [
            ("concurrent_strength", self.concurrent_strength),
            ("lagged_strength", self.lagged_strength),
            ("nonlinearity", self.nonlinearity),
        ] {
            ensure!((0.0..=1.0).contains(&v), Validation, "{name} must lie in [0, 1], got {v}");
        }
        ensure!(self.lag_s >= 0.0, Validation, "lag_s must be non-negative, got {}", self.lag_s);
        Ok(())
    }

    /// Lag in whole samples; `lag_s * fs` is rounded to the nearest integer.
    pub fn lag_samples(&self, fs: f64) -> usize {
        (self.lag_s * fs).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub n_dyads_per_class: usize,
    pub n_channels: usize,
    pub conditions_per_dyad: usize,
    pub duration_s: f64,
    pub fs: f64,
    /// Profile for label 0 (control) dyads.
    pub class0: CouplingProfile,
    /// Profile for label 1 (ASD-like) dyads.
    pub class1: CouplingProfile,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_dyads_per_class: 18,
            n_channels: 8,
            conditions_per_dyad: 8,
            duration_s: 120.0,
            fs: 10.0,
            class0: CouplingProfile::UNCOUPLED,
            class1: CouplingProfile::UNCOUPLED,
            noise_sd: 0.3,
            seed: 0,
        }
    }
}

impl CohortConfig {
    /// Classes that differ only in lagged, nonlinear coupling.
    ///
    /// Controls carry strong coupling at a 60 s lag, ASD-like dyads a weak
    /// one; neither class has concurrent coupling. At 5–20 s periods a 60 s
    /// lag is several wavelet envelopes long, so lag-0 coherence and phase
    /// locking see independent signals while the lag-scanning entropy index
    /// recovers the coupling. Blocks are 300 s at 4 Hz to leave room for it.
    pub fn lagged_contrast(seed: u64) -> Self {
        let profile = |lagged_strength| CouplingProfile {
            concurrent_strength: 0.0,
            lagged_strength,
            lag_s: 60.0,
            nonlinearity: 0.3,
        };
        CohortConfig {
            duration_s: 300.0,
            fs: 4.0,
            class0: profile(0.7),
            class1: profile(0.2),
            seed,
            ..CohortConfig::default()
        }
    }

    /// Same recording geometry as [`CohortConfig::lagged_contrast`] with
    /// identical coupling in both classes.
    pub fn null_contrast(seed: u64) -> Self {
        let mut cfg = Self::lagged_contrast(seed);
        cfg.class1 = cfg.class0;
        cfg
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.fs).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_dyads_per_class > 0, Config, "n_dyads_per_class must be at least 1");
        ensure!(self.conditions_per_dyad > 0, Config, "conditions_per_dyad must be at least 1");
        ensure!(self.n_channels > 0, Config, "n_channels must be at least 1");
        ensure!(
            self.fs.is_finite() && self.fs > 0.0,
            Config,
            "fs must be positive, got {}",
            self.fs
        );
        ensure!(
            self.duration_s.is_finite() && self.n_samples() >= MIN_SAMPLES,
            Config,
            "duration_s * fs = {} samples, need at least {MIN_SAMPLES}",
            self.n_samples()
        );
        ensure!(
            self.noise_sd.is_finite() && self.noise_sd >= 0.0,
            Config,
            "noise_sd must be non-negative, got {}",
            self.noise_sd
        );
        self.class0.validate()?;
        self.class1.validate()?;
        Ok(())
    }
}

fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let inv = if sd > 0.0 { 1.0 / sd } else { 0.0 };
    for v in x.iter_mut() {
        *v = (*v - mean) * inv;
    }
}

fn slow_oscillator<R: Rng>(n: usize, fs: f64, rng: &mut R) -> Vec<f64> {
    let dt = 1.0 / fs;
    let step_sd = PHASE_DRIFT * dt.sqrt();
    let mut out: Vec<f64> = (0..n)
        .map(|_| OSC_WHITE_NOISE * rng.sample::<f64, _>(StandardNormal))
        .collect();
    for amp in [1.0, rng.random_range(0.3..1.0)] {
        let freq = rng.random_range(OSC_BAND_HZ.0..OSC_BAND_HZ.1);
        let mut phase = rng.random_range(0.0..std::f64::consts::TAU);
        for (i, v) in out.iter_mut().enumerate() {
            *v += amp * (std::f64::consts::TAU * freq * i as f64 * dt + phase).sin();
            phase += step_sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    standardize(&mut out);
    out
}

/// Blend of identity and the signed square `x|x|`, the latter rescaled to
/// the variance of `x` first.
fn signed_square_blend(x: &[f64], nonlinearity: f64) -> Vec<f64> {
    let mut sq: Vec<f64> = x.iter().map(|v| v * v.abs()).collect();
    standardize(&mut sq);
    x.iter()
        .zip(&sq)
        .map(|(a, b)| (1.0 - nonlinearity) * a + nonlinearity * b)
        .collect()
}

/// One coupled channel pair, both standardized to zero mean and unit
/// variance. The participant-2 series is
/// `c·x(t) + l·g(x(t − lag)) + sqrt(1 − c² − l²)·own(t) + noise`.
pub fn coupled_oscillator_pair(
    profile: &CouplingProfile,
    n_samples: usize,
    fs: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    profile.validate()?;
    ensure!(
        n_samples >= MIN_SAMPLES,
        Config,
        "need at least {MIN_SAMPLES} samples, got {n_samples}"
    );
    ensure!(fs.is_finite() && fs > 0.0, Config, "fs must be positive, got {fs}");
    ensure!(
        noise_sd.is_finite() && noise_sd >= 0.0,
        Validation,
        "noise_sd must be non-negative, got {noise_sd}"
    );

    let mut rng = rng_for(seed, &[]);
    let lag = profile.lag_samples(fs);
    let source = slow_oscillator(n_samples + lag, fs, &mut rng);
    let own = slow_oscillator(n_samples, fs, &mut rng);
    let present = &source[lag..];
    let lagged = signed_square_blend(&source[..n_samples], profile.nonlinearity);

    let c = profile.concurrent_strength;
    let l = profile.lagged_strength;
    let own_weight = (1.0 - c * c - l * l).max(0.0).sqrt();

    let mut x1: Vec<f64> = present.to_vec();
    let mut x2: Vec<f64> = (0..n_samples)
        .map(|t| c * present[t] + l * lagged[t] + own_weight * own[t])
        .collect();
    if noise_sd > 0.0 {
        for v in x1.iter_mut().chain(x2.iter_mut()) {
            *v += noise_sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    standardize(&mut x1);
    standardize(&mut x2);
    Ok((x1, x2))
}

fn jittered(profile: &CouplingProfile, conc: f64, lagged: f64) -> CouplingProfile {
    CouplingProfile {
        concurrent_strength: (profile.concurrent_strength * conc).min(1.0),
        lagged_strength: (profile.lagged_strength * lagged).min(1.0),
        ..*profile
    }
}

fn generate_dyad(config: &CohortConfig, dyad: usize) -> Result<Vec<DyadRecording>> {
    let n_per_class = config.n_dyads_per_class;
    let label = u8::from(dyad >= n_per_class);
    let profile = if label == 1 { &config.class1 } else { &config.class0 };
    let d = dyad as u64;

    let mut jitter_rng = rng_for(config.seed, &[d, u64::MAX]);
    let channel_profiles: Vec<CouplingProfile> = (0..config.n_channels)
        .map(|_| {
            let conc = jitter_rng.random_range(JITTER.0..JITTER.1);
            let lagged = jitter_rng.random_range(JITTER.0..JITTER.1);
            jittered(profile, conc, lagged)
        })
        .collect();

    let n = config.n_samples();
    let dyad_id = format!("D{:03}", dyad + 1);
    let mut out = Vec::with_capacity(2 * config.conditions_per_dyad);
    for cond in 0..config.conditions_per_dyad {
        let c = cond as u64;
        let mut p1 = Vec::with_capacity(config.n_channels);
        let mut p2 = Vec::with_capacity(config.n_channels);
        for (ch, prof) in channel_profiles.iter().enumerate() {
            let seed = derive_seed(config.seed, &[d, c, ch as u64]);
            let (a, b) = coupled_oscillator_pair(prof, n, config.fs, config.noise_sd, seed)?;
            p1.push(a);
            p2.push(b);
        }

        let mut hbr_rng = rng_for(config.seed, &[d, c, u64::MAX]);
        let mut to_hbr = |chans: &[Vec<f64>]| -> Vec<Vec<f64>> {
            chans
                .iter()
                .map(|ch| {
                    ch.iter()
                        .map(|v| {
                            HBR_SCALE * v
                                + config.noise_sd * hbr_rng.sample::<f64, _>(StandardNormal)
                        })
                        .collect()
                })
                .collect()
        };
        let hbr_p1 = to_hbr(&p1);
        let hbr_p2 = to_hbr(&p2);

        let condition_id = format!("C{}", cond + 1);
        out.push(DyadRecording {
            dyad_id: dyad_id.clone(),
            label,
            condition_id: condition_id.clone(),
            chromophore: Chromophore::Hbo,
            fs: config.fs,
            p1,
            p2,
        });
        out.push(DyadRecording {
            dyad_id: dyad_id.clone(),
            label,
            condition_id,
            chromophore: Chromophore::Hbr,
            fs: config.fs,
            p1: hbr_p1,
            p2: hbr_p2,
        });
    }
    Ok(out)
}

/// Generates `2 * n_dyads_per_class` dyads; the first half are controls.
/// Recordings come out ordered by dyad, condition, then HBO before HBR.
pub fn generate_dyad_cohort(config: &CohortConfig) -> Result<Vec<DyadRecording>> {
    config.validate()?;
    let per_dyad = (0..2 * config.n_dyads_per_class)
        .into_par_iter()
        .map(|d| generate_dyad(config, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_dyad.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn small_config() -> CohortConfig {
        CohortConfig {
            n_dyads_per_class: 1,
            n_channels: 2,
            conditions_per_dyad: 1,
            duration_s: 30.0,
            fs: 10.0,
            ..CohortConfig::default()
        }
    }

    #[test]
    fn uncoupled_pair_is_uncorrelated() {
        let mut rs = Vec::new();
        for seed in 0..20 {
            let (a, b) =
                coupled_oscillator_pair(&CouplingProfile::UNCOUPLED, 8192, 10.0, 0.3, seed)
                    .unwrap();
            rs.push(pearson(&a, &b));
        }
        let mean = rs.iter().sum::<f64>() / rs.len() as f64;
        assert!(mean.abs() < 0.05, "mean correlation {mean}");
    }

    #[test]
    fn pure_copy_is_identical() {
        let profile = CouplingProfile {
            concurrent_strength: 1.0,
            ..CouplingProfile::UNCOUPLED
        };
        let (a, b) = coupled_oscillator_pair(&profile, 512, 10.0, 0.0, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn outputs_are_standardized() {
        let profile = CouplingProfile {
            concurrent_strength: 0.3,
            lagged_strength: 0.5,
            lag_s: 1.5,
            nonlinearity: 0.5,
        };
        let (a, b) = coupled_oscillator_pair(&profile, 1000, 10.0, 0.2, 9).unwrap();
        for x in [&a, &b] {
            let mean = x.iter().sum::<f64>() / 1000.0;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 1000.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_rejects_bad_input() {
        let p = CouplingProfile::UNCOUPLED;
        assert!(matches!(
            coupled_oscillator_pair(&p, 100, 10.0, 0.1, 0),
            Err(Error::Config(_))
        ));
        let bad = CouplingProfile {
            lagged_strength: f64::NAN,
            ..p
        };
        assert!(matches!(
            coupled_oscillator_pair(&bad, 512, 10.0, 0.1, 0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn cohort_counts() {
        let recs = generate_dyad_cohort(&small_config()).unwrap();
        assert_eq!(recs.len(), 4);
        let hbo = recs.iter().filter(|r| r.chromophore == Chromophore::Hbo).count();
        assert_eq!(hbo, 2);
        assert_eq!(recs.iter().filter(|r| r.label == 1).count(), 2);
        for r in &recs {
            r.validate().unwrap();
        }
    }

    #[test]
    fn cohort_is_deterministic() {
        let cfg = small_config();
        assert_eq!(generate_dyad_cohort(&cfg).unwrap(), generate_dyad_cohort(&cfg).unwrap());
        let other = CohortConfig { seed: 1, ..cfg.clone() };
        assert_ne!(generate_dyad_cohort(&cfg).unwrap(), generate_dyad_cohort(&other).unwrap());
    }

    #[test]
    fn cohort_rejects_empty_shapes() {
        let cfg = CohortConfig {
            n_dyads_per_class: 0,
            ..small_config()
        };
        assert!(matches!(generate_dyad_cohort(&cfg), Err(Error::Config(_))));
        let cfg = CohortConfig {
            conditions_per_dyad: 0,
            ..small_config()
        };
        assert!(matches!(generate_dyad_cohort(&cfg), Err(Error::Config(_))));
        let cfg = CohortConfig {
            duration_s: 10.0,
            ..small_config()
        };
        assert!(matches!(generate_dyad_cohort(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn hbr_is_anticorrelated_with_hbo() {
        let recs = generate_dyad_cohort(&small_config()).unwrap();
        let hbo = &recs[0];
        let hbr = &recs[1];
        assert_eq!(hbo.key().dyad_id, hbr.key().dyad_id);
        for ch in 0..2 {
            assert!(pearson(&hbo.p1[ch], &hbr.p1[ch]) < -0.5);
            assert!(pearson(&hbo.p2[ch], &hbr.p2[ch]) < -0.5);
        }
    }
}
