//! Synthetic clean signals, noise models, SNR, and windowing.
//!
//! All noise kinds are additive and signal-independent, so
//! `corrupt(clean, spec) - clean` depends only on the spec and seed.
//! Every randomized operation is a deterministic function of its seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Aligned clean/noisy pair with sampling metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalPair {
    pub id: String,
    pub sample_rate_hz: f64,
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
}

impl SignalPair {
    pub fn new(id: String, sample_rate_hz: f64, clean: Vec<f64>, noisy: Vec<f64>) -> Result<Self> {
        if clean.is_empty() || clean.len() != noisy.len() {
            return Err(Error::Data(format!(
                "signal '{id}': clean and noisy must have equal nonzero length ({} vs {})",
                clean.len(),
                noisy.len()
            )));
        }
        if sample_rate_hz <= 0.0 || !sample_rate_hz.is_finite() {
            return Err(Error::Data(format!("signal '{id}': invalid sample rate {sample_rate_hz}")));
        }
        if clean.iter().chain(noisy.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("signal '{id}': non-finite sample")));
        }
        Ok(SignalPair { id, sample_rate_hz, clean, noisy })
    }

    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }
}

/// Clean-signal generators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CleanKind {
    /// One sinusoid, amplitude 1, random phase.
    Sine,
    /// Sum of three random-phase harmonics of a 1 Hz base.
    Multisine,
    /// Periodic spike-train template over a slow baseline; shape only.
    SyntheticEcg,
}

impl std::str::FromStr for CleanKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(CleanKind::Sine),
            "multisine" => Ok(CleanKind::Multisine),
            "synthetic_ecg" => Ok(CleanKind::SyntheticEcg),
            other => Err(Error::Config(format!("unknown signal kind '{other}'"))),
        }
    }
}

const TWO_PI: f64 = std::f64::consts::TAU;

/// Generate a clean signal of `len` samples.
pub fn gen_clean(kind: CleanKind, len: usize, sample_rate_hz: f64, seed: u64) -> Result<Vec<f64>> {
    if len < 1 {
        return Err(Error::Data("signal length must be >= 1".into()));
    }
    if sample_rate_hz <= 0.0 {
        return Err(Error::Data(format!("invalid sample rate {sample_rate_hz}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    use rand::Rng;
    let out = match kind {
        CleanKind::Sine => {
            let phase = rng.random_range(0.0..TWO_PI);
            let freq = 1.0;
            (0..len)
                .map(|n| (TWO_PI * freq * n as f64 / sample_rate_hz + phase).sin())
                .collect()
        }
        CleanKind::Multisine => {
            // Harmonics of 1 Hz keep the common period at one second.
            let parts: Vec<(f64, f64, f64)> = [(1.0, 1.0), (2.0, 0.6), (3.0, 0.3)]
                .iter()
                .map(|(h, a)| (*h, *a, rng.random_range(0.0..TWO_PI)))
                .collect();
            (0..len)
                .map(|n| {
                    let t = n as f64 / sample_rate_hz;
                    parts
                        .iter()
                        .map(|(f, a, p)| a * (TWO_PI * f * t + p).sin())
                        .sum()
                })
                .collect()
        }
        CleanKind::SyntheticEcg => {
            // Gaussian spike per beat plus a smaller repolarization bump
            // and a slow baseline drift.
            let beat_hz = 1.2;
            let phase = rng.random_range(0.0..1.0);
            (0..len)
                .map(|n| {
                    let t = n as f64 / sample_rate_hz;
                    let beat = (t * beat_hz + phase).fract();
                    let spike = (-((beat - 0.3) / 0.02).powi(2)).exp();
                    let bump = 0.25 * (-((beat - 0.55) / 0.06).powi(2)).exp();
                    let baseline = 0.1 * (TWO_PI * 0.25 * t).sin();
                    spike + bump + baseline
                })
                .collect()
        }
    };
    Ok(out)
}

/// One additive noise source.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseKind {
    Gaussian { sigma: f64 },
    RandomWalk { sigma: f64 },
    Powerline { freq_hz: f64, amplitude: f64 },
    /// Ordered application of the other kinds.
    Composite(Vec<NoiseKind>),
}

impl NoiseKind {
    fn validate(&self) -> Result<()> {
        match self {
            NoiseKind::Gaussian { sigma } | NoiseKind::RandomWalk { sigma } => {
                if *sigma < 0.0 || !sigma.is_finite() {
                    return Err(Error::Config(format!("sigma must be nonnegative, got {sigma}")));
                }
            }
            NoiseKind::Powerline { freq_hz, amplitude } => {
                if *freq_hz <= 0.0 || !freq_hz.is_finite() {
                    return Err(Error::Config(format!("line frequency must be positive, got {freq_hz}")));
                }
                if !amplitude.is_finite() {
                    return Err(Error::Config("powerline amplitude must be finite".into()));
                }
            }
            NoiseKind::Composite(parts) => {
                if parts.iter().any(|p| matches!(p, NoiseKind::Composite(_))) {
                    return Err(Error::Config("composite noise cannot nest composites".into()));
                }
                for p in parts {
                    p.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Scale every sigma/amplitude by `factor`; noise realizations are
    /// linear in these parameters.
    pub fn scaled(&self, factor: f64) -> NoiseKind {
        match self {
            NoiseKind::Gaussian { sigma } => NoiseKind::Gaussian { sigma: sigma * factor },
            NoiseKind::RandomWalk { sigma } => NoiseKind::RandomWalk { sigma: sigma * factor },
            NoiseKind::Powerline { freq_hz, amplitude } => NoiseKind::Powerline {
                freq_hz: *freq_hz,
                amplitude: amplitude * factor,
            },
            NoiseKind::Composite(parts) => {
                NoiseKind::Composite(parts.iter().map(|p| p.scaled(factor)).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        self.kind.validate()
    }
}

fn gaussian_steps(len: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..len).map(|_| sigma * normal.sample(&mut rng)).collect()
}

fn sub_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// The additive noise realization for `spec` over `len` samples.
pub fn noise(len: usize, sample_rate_hz: f64, spec: &NoiseSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok(noise_kind(len, sample_rate_hz, &spec.kind, spec.seed))
}

fn noise_kind(len: usize, sample_rate_hz: f64, kind: &NoiseKind, seed: u64) -> Vec<f64> {
    match kind {
        NoiseKind::Gaussian { sigma } => gaussian_steps(len, *sigma, seed),
        NoiseKind::RandomWalk { sigma } => {
            let mut acc = 0.0;
            gaussian_steps(len, *sigma, seed)
                .into_iter()
                .map(|step| {
                    acc += step;
                    acc
                })
                .collect()
        }
        NoiseKind::Powerline { freq_hz, amplitude } => (0..len)
            .map(|n| amplitude * (TWO_PI * freq_hz * n as f64 / sample_rate_hz).sin())
            .collect(),
        NoiseKind::Composite(parts) => {
            let mut total = vec![0.0; len];
            for (i, part) in parts.iter().enumerate() {
                let part_noise = noise_kind(len, sample_rate_hz, part, sub_seed(seed, i as u64));
                for (acc, v) in total.iter_mut().zip(part_noise) {
                    *acc += v;
                }
            }
            total
        }
    }
}

/// Add the spec's noise to `clean`.
pub fn corrupt(clean: &[f64], sample_rate_hz: f64, spec: &NoiseSpec) -> Result<Vec<f64>> {
    let n = noise(clean.len(), sample_rate_hz, spec)?;
    Ok(clean.iter().zip(n).map(|(c, v)| c + v).collect())
}

/// `10 log10(sum clean^2 / sum (clean - estimate)^2)`; returns
/// `f64::INFINITY` when the estimate is exact.
pub fn snr_db(clean: &[f64], estimate: &[f64]) -> Result<f64> {
    if clean.len() != estimate.len() || clean.is_empty() {
        return Err(Error::Data(format!(
            "snr_db needs equal nonzero lengths, got {} and {}",
            clean.len(),
            estimate.len()
        )));
    }
    let signal: f64 = clean.iter().map(|v| v * v).sum();
    if signal == 0.0 {
        return Err(Error::Data("snr_db is undefined for an all-zero clean signal".into()));
    }
    let residual: f64 = clean
        .iter()
        .zip(estimate)
        .map(|(c, e)| (c - e) * (c - e))
        .sum();
    if residual == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / residual).log10())
}

/// Non-overlapping training windows; a trailing remainder shorter than
/// `window_len` is dropped (inference never windows).
pub fn window_split(pair: &SignalPair, window_len: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    window_split_strided(pair, window_len, window_len)
}

/// Windowing with an explicit stride (`stride = window_len` gives the
/// non-overlapping default).
pub fn window_split_strided(
    pair: &SignalPair,
    window_len: usize,
    stride: usize,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    assert!(window_len >= 1 && stride >= 1);
    if pair.len() < window_len {
        log::warn!(
            "signal '{}' of length {} is shorter than the window {}; no training windows",
            pair.id,
            pair.len(),
            window_len
        );
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + window_len <= pair.len() {
        out.push((
            pair.clean[start..start + window_len].to_vec(),
            pair.noisy[start..start + window_len].to_vec(),
        ));
        start += stride;
    }
    out
}
