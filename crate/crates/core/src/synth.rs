//! Source-filter synthesis of simple voiced sounds: glottal pulse trains
//! through cascaded second-order formant resonators.

use std::f64::consts::PI;

use rand::Rng;

use crate::audio::AudioBuffer;
use crate::error::Result;

/// A formant as centre frequency and bandwidth, both in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Formant {
    pub freq_hz: f64,
    pub bandwidth_hz: f64,
}

impl Formant {
    pub const fn new(freq_hz: f64, bandwidth_hz: f64) -> Self {
        Self {
            freq_hz,
            bandwidth_hz,
        }
    }
}

/// Unity-DC-gain two-pole resonator.
#[derive(Debug, Clone)]
pub struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    pub fn new(formant: Formant, sample_rate_hz: u32) -> Self {
        let t = 1.0 / f64::from(sample_rate_hz);
        let c = -(-2.0 * PI * formant.bandwidth_hz * t).exp();
        let b = 2.0 * (-PI * formant.bandwidth_hz * t).exp() * (2.0 * PI * formant.freq_hz * t).cos();
        Self {
            a: 1.0 - b - c,
            b,
            c,
            y1: 0.0,
            y2: 0.0,
        }
    }

    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

pub fn resonator_cascade(x: &[f64], formants: &[Formant], sample_rate_hz: u32) -> Vec<f64> {
    let mut bank: Vec<Resonator> = formants
        .iter()
        .map(|f| Resonator::new(*f, sample_rate_hz))
        .collect();
    x.iter()
        .map(|&s| bank.iter_mut().fold(s, |acc, r| r.process(acc)))
        .collect()
}

/// Impulse train at `f0_hz` with relative period jitter, plus white noise at
/// `noise` amplitude.
pub fn excitation<R: Rng>(
    f0_hz: f64,
    len: usize,
    sample_rate_hz: u32,
    jitter: f64,
    noise: f64,
    rng: &mut R,
) -> Vec<f64> {
    let period = f64::from(sample_rate_hz) / f0_hz;
    let mut out: Vec<f64> = (0..len)
        .map(|_| noise * (rng.random::<f64>() * 2.0 - 1.0))
        .collect();
    let mut next = 0.0f64;
    while (next as usize) < len {
        out[next as usize] += 1.0;
        next += period * (1.0 + jitter * (rng.random::<f64>() * 2.0 - 1.0));
    }
    out
}

/// Scales `x` so its peak magnitude is `peak` (silence is left alone).
pub fn normalize_peak(x: &mut [f64], peak: f64) {
    let max = x.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if max > 0.0 {
        x.iter_mut().for_each(|s| *s *= peak / max);
    }
}

/// Steady vowel: jitter-free pulse train at `f0_hz` through `formants`,
/// peak-normalized to 0.5.
pub fn steady_vowel(
    formants: &[Formant],
    f0_hz: f64,
    duration_secs: f64,
    sample_rate_hz: u32,
) -> Result<AudioBuffer> {
    let len = (duration_secs * f64::from(sample_rate_hz)).round() as usize;
    let period = f64::from(sample_rate_hz) / f0_hz;
    let mut source = vec![0.0; len];
    let mut t = 0.0f64;
    while (t as usize) < len {
        source[t as usize] = 1.0;
        t += period;
    }
    let mut y = resonator_cascade(&source, formants, sample_rate_hz);
    normalize_peak(&mut y, 0.5);
    AudioBuffer::new(y, sample_rate_hz)
}
