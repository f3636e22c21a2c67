//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

pub fn snr_db(reference: &[f64], test: &[f64]) -> f64 {
    let signal: f64 = reference.iter().map(|x| x * x).sum();
    let noise: f64 = reference.iter().zip(test).map(|(a, b)| (a - b).powi(2)).sum();
    10.0 * (signal / noise).log10()
}

/// Welch power spectrum smoothed over +-`half_width_hz`, as (Hz, power).
pub fn smoothed_spectrum(x: &[f64], sr: f64, half_width_hz: f64) -> Vec<(f64, f64)> {
    let n = 2048;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut acc = vec![0.0; n / 2 + 1];
    let mut start = 0;
    while start + n <= x.len() {
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|i| {
                let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
                Complex::new(x[start + i] * w, 0.0)
            })
            .collect();
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        start += n / 2;
    }
    let bin = sr / n as f64;
    let k = (half_width_hz / bin).round() as usize;
    (0..acc.len())
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(k), (i + k).min(acc.len() - 1));
            (i as f64 * bin, acc[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64)
        })
        .collect()
}

/// The largest local maximum between `lo` and `hi` Hz and the largest one at
/// least 300 Hz away from it, in frequency order.
pub fn two_peaks(spec: &[(f64, f64)], lo: f64, hi: f64) -> (f64, f64) {
    let mut peaks: Vec<(f64, f64)> = spec
        .windows(3)
        .filter(|w| w[1].0 >= lo && w[1].0 <= hi && w[1].1 > w[0].1 && w[1].1 >= w[2].1)
        .map(|w| w[1])
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    let a = peaks[0].0;
    let b = peaks.iter().find(|p| (p.0 - a).abs() >= 300.0).expect("second peak").0;
    (a.min(b), a.max(b))
}

pub fn warped_hz(f: f64, alpha: f64, sr: f64) -> f64 {
    (2.0 * PI * f / sr).powf(alpha) * sr / (2.0 * PI)
}
