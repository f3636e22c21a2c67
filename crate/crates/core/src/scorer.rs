//! Training-free utterance similarity scorer: long-term average mel
//! log-spectra compared by cosine, with an affine map to calibrated LLRs.
//!
//! This is a desk-scale stand-in for a trained speaker verification system.
//! It separates the synthetic voices produced by [`crate::corpus`] but makes
//! no claim about real speech.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::audio::{read_wav, AudioBuffer, Window};
use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::privacy::{Label, ScoreSet, Trial};

pub const FEATURE_DIM: usize = 64;
pub const FFT_LEN: usize = 512;
pub const FFT_HOP: usize = 256;
/// Frames more than 60 dB below the loudest frame are ignored.
const SILENCE_RATIO: f64 = 1e-6;
/// Band energies are floored 120 dB below their frame's total energy.
const BAND_FLOOR_RATIO: f64 = 1e-12;
pub const MIN_CALIBRATION_PAIRS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UttVector {
    pub utt_id: String,
    pub features: Vec<f64>,
    /// No usable frames or a flat spectrum; `features` is all zeros.
    pub silent: bool,
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters over the `FFT_LEN / 2 + 1` power-spectrum bins.
fn mel_filterbank(sample_rate_hz: u32) -> Vec<Vec<(usize, f64)>> {
    let nyquist = f64::from(sample_rate_hz) / 2.0;
    let bins = FFT_LEN / 2 + 1;
    let bin_hz = f64::from(sample_rate_hz) / FFT_LEN as f64;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..FEATURE_DIM + 2)
        .map(|i| mel_to_hz(top * i as f64 / (FEATURE_DIM + 1) as f64))
        .collect();
    (0..FEATURE_DIM)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut taps: Vec<(usize, f64)> = (0..bins)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f > lo && f <= mid {
                        (f - lo) / (mid - lo)
                    } else if f > mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect();
            if taps.is_empty() {
                let nearest = ((mid / bin_hz).round() as usize).min(bins - 1);
                taps.push((nearest, 1.0));
            }
            taps
        })
        .collect()
}

/// Reusable FFT plan and filterbank for one sample rate.
pub struct Featurizer {
    sample_rate_hz: u32,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    filters: Vec<Vec<(usize, f64)>>,
}

impl Featurizer {
    pub fn new(sample_rate_hz: u32) -> Self {
        Self {
            sample_rate_hz,
            fft: FftPlanner::new().plan_fft_forward(FFT_LEN),
            window: Window::Hann.coefficients(FFT_LEN),
            filters: mel_filterbank(sample_rate_hz),
        }
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    /// Mean log mel energy over non-silent frames, normalized to zero mean
    /// and unit variance across bands.
    pub fn featurize(&self, utt_id: &str, audio: &AudioBuffer) -> Result<UttVector> {
        if audio.sample_rate_hz() != self.sample_rate_hz {
            return Err(Error::InvalidInput(format!(
                "featurizer runs at {} Hz, audio is {} Hz",
                self.sample_rate_hz,
                audio.sample_rate_hz()
            )));
        }
        if audio.is_empty() {
            return Err(Error::InvalidInput(format!("{utt_id}: no audio")));
        }
        let x = audio.samples();
        let n_frames = if x.len() <= FFT_LEN { 1 } else { 1 + (x.len() - FFT_LEN).div_ceil(FFT_HOP) };
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_LEN];
        let mut bands = Vec::with_capacity(n_frames);
        for f in 0..n_frames {
            let start = f * FFT_HOP;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(x.get(start + i).copied().unwrap_or(0.0) * self.window[i], 0.0);
            }
            self.fft.process(&mut buf);
            let power: Vec<f64> = buf[..=FFT_LEN / 2].iter().map(|c| c.norm_sqr()).collect();
            let energy: f64 = power.iter().sum();
            let band: Vec<f64> = self
                .filters
                .iter()
                .map(|taps| taps.iter().map(|&(k, w)| w * power[k]).sum())
                .collect();
            bands.push((energy, band));
        }
        let loudest = bands.iter().map(|(e, _)| *e).fold(0.0, f64::max);
        let zero = || UttVector {
            utt_id: utt_id.to_string(),
            features: vec![0.0; FEATURE_DIM],
            silent: true,
        };
        if loudest <= 0.0 {
            return Ok(zero());
        }
        let mut mean = vec![0.0; FEATURE_DIM];
        let mut used = 0usize;
        for (energy, band) in &bands {
            if *energy < loudest * SILENCE_RATIO {
                continue;
            }
            let floor = energy * BAND_FLOOR_RATIO;
            for (m, e) in mean.iter_mut().zip(band) {
                *m += e.max(floor).ln();
            }
            used += 1;
        }
        mean.iter_mut().for_each(|m| *m /= used as f64);
        let mu = mean.iter().sum::<f64>() / FEATURE_DIM as f64;
        let sd = (mean.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / FEATURE_DIM as f64).sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            return Ok(zero());
        }
        Ok(UttVector {
            utt_id: utt_id.to_string(),
            features: mean.iter().map(|m| (m - mu) / sd).collect(),
            silent: false,
        })
    }
}

pub fn featurize(utt_id: &str, audio: &AudioBuffer) -> Result<UttVector> {
    Featurizer::new(audio.sample_rate_hz()).featurize(utt_id, audio)
}

/// Featurizes every manifest entry (paths relative to `base`) in parallel.
pub fn featurize_manifest(base: &Path, manifest: &Manifest) -> Result<BTreeMap<String, UttVector>> {
    manifest
        .entries
        .par_iter()
        .map_init(HashMap::new, |cache: &mut HashMap<u32, Featurizer>, e| {
            let audio = read_wav(base.join(&e.path))?;
            cache
                .entry(audio.sample_rate_hz())
                .or_insert_with(|| Featurizer::new(audio.sample_rate_hz()))
                .featurize(&e.utt_id, &audio)
                .map(|v| (v.utt_id.clone(), v))
        })
        .collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Affine map from cosine similarity to LLR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub slope: f64,
    pub offset: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Calibration {
    pub const IDENTITY: Self = Self {
        slope: 1.0,
        offset: 0.0,
    };

    pub fn new(slope: f64, offset: f64) -> Result<Self> {
        let c = Self { slope, offset };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.slope.is_finite() || !self.offset.is_finite() || self.slope <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "calibration needs finite parameters and a positive slope, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn apply(&self, raw: f64) -> f64 {
        self.slope * raw + self.offset
    }
}

/// `slope * cos(a, b) + offset`.
pub fn score(a: &UttVector, b: &UttVector, cal: Calibration) -> f64 {
    cal.apply(cosine(&a.features, &b.features))
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn logistic(x: f64) -> f64 {
    crate::privacy::sigmoid(x)
}

/// Ridge weight on the slope. Keeps the fit finite when the development
/// trials are separable.
pub const SLOPE_PENALTY: f64 = 1e-5;

/// Class-balanced logistic loss in nats and its gradient and Hessian with
/// respect to `(slope, offset)`.
fn objective(tar: &[f64], non: &[f64], a: f64, b: f64) -> (f64, [f64; 2], [[f64; 3]; 1]) {
    let (wt, wn) = (0.5 / tar.len() as f64, 0.5 / non.len() as f64);
    let (mut f, mut g, mut h) = (0.0, [0.0; 2], [0.0; 3]);
    let mut acc = |x: f64, sign: f64, w: f64| {
        // loss softplus(-sign * (a x + b))
        let z = sign * (a * x + b);
        f += w * softplus(-z);
        let p = logistic(-z);
        g[0] -= w * sign * p * x;
        g[1] -= w * sign * p;
        let c = w * p * (1.0 - p);
        h[0] += c * x * x;
        h[1] += c * x;
        h[2] += c;
    };
    tar.iter().for_each(|&x| acc(x, 1.0, wt));
    non.iter().for_each(|&x| acc(x, -1.0, wn));
    f += 0.5 * SLOPE_PENALTY * a * a;
    g[0] += SLOPE_PENALTY * a;
    h[0] += SLOPE_PENALTY;
    (f, g, [h])
}

/// Fits `(slope, offset)` by class-balanced logistic regression of label on
/// raw cosine, which minimizes Cllr on the development scores up to a small
/// ridge penalty on the slope.
///
/// A non-positive fitted slope is raised to a small positive value and the
/// offset refit, keeping the map monotone.
pub fn calibrate(dev: &ScoreSet) -> Result<Calibration> {
    let (tar, non) = (dev.targets(), dev.impostors());
    if tar.is_empty() {
        return Err(Error::EmptyClass("target"));
    }
    if non.is_empty() {
        return Err(Error::EmptyClass("impostor"));
    }
    if tar.len() < MIN_CALIBRATION_PAIRS || non.len() < MIN_CALIBRATION_PAIRS {
        return Err(Error::InvalidInput(format!(
            "calibration needs at least {MIN_CALIBRATION_PAIRS} pairs per class, got {} target and {} impostor",
            tar.len(),
            non.len()
        )));
    }
    let (a, b) = newton(&tar, &non, 1.0, 0.0, false);
    let (a, b) = if a > 0.0 {
        (a, b)
    } else {
        newton(&tar, &non, 1e-6, b, true)
    };
    Calibration::new(a, b)
}

fn newton(tar: &[f64], non: &[f64], mut a: f64, mut b: f64, offset_only: bool) -> (f64, f64) {
    for _ in 0..200 {
        let (f, g, [h]) = objective(tar, non, a, b);
        let (da, db) = if offset_only {
            (0.0, g[1] / h[2].max(1e-300))
        } else {
            let det = h[0] * h[2] - h[1] * h[1];
            if !(det > 1e-300) {
                break;
            }
            ((h[2] * g[0] - h[1] * g[1]) / det, (h[0] * g[1] - h[1] * g[0]) / det)
        };
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-10 {
            let (na, nb) = (a - step * da, b - step * db);
            if objective(tar, non, na, nb).0 < f {
                a = na;
                b = nb;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved || (da.abs() + db.abs()) * step < 1e-12 {
            break;
        }
    }
    (a, b)
}

/// Scores keyed trials, looking enrollment ids up in `enroll` and test ids
/// in `test`.
pub fn score_trials(
    enroll: &BTreeMap<String, UttVector>,
    test: &BTreeMap<String, UttVector>,
    trials: &[(String, String, Label)],
    cal: Calibration,
) -> Result<ScoreSet> {
    fn lookup<'a>(side: &'a BTreeMap<String, UttVector>, id: &str) -> Result<&'a UttVector> {
        side.get(id)
            .ok_or_else(|| Error::InvalidInput(format!("no features for utterance {id}")))
    }
    let trials = trials
        .par_iter()
        .map(|(e, t, label)| {
            Ok(Trial {
                enroll: e.clone(),
                test: t.clone(),
                score: score(lookup(enroll, e)?, lookup(test, t)?, cal),
                label: *label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreSet { trials })
}
