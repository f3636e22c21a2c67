//! Linear prediction: autocorrelation analysis, pole extraction, pole-to-
//! coefficient expansion and all-pole synthesis.
//!
//! Coefficients follow the predictor convention: `a[k-1]` holds `a_k` in
//! `A(z) = 1 - sum_k a_k z^-k`, so the prediction of `x[n]` is
//! `sum_k a_k x[n-k]` and the poles are the roots of
//! `z^p - a_1 z^(p-1) - ... - a_p`.

use std::f64::consts::PI;

use log::debug;
use nalgebra::{linalg::Schur, DMatrix};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Reflection coefficients at or beyond this magnitude are clamped.
pub const MAX_REFLECTION: f64 = 0.999;

/// Poles whose imaginary parts are within this of zero are treated as real,
/// and eigenvalue pairs within it are matched as conjugates.
pub const CONJUGATE_TOLERANCE: f64 = 1e-8;

/// Synthesis output above this magnitude is reported as instability.
pub const INSTABILITY_LIMIT: f64 = 1e4;

/// `sample_rate / 1000 + 4`, i.e. 20 at 16 kHz.
pub fn default_order(sample_rate_hz: u32) -> usize {
    (sample_rate_hz / 1000) as usize + 4
}

/// Result of analysing one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcFrame {
    /// `a_1..a_p`; the leading 1 of `A(z)` is implicit.
    pub coeffs: Vec<f64>,
    /// Inverse-filtered frame, zero initial state.
    pub residual: Vec<f64>,
    /// Final prediction error power from the recursion (normalized by frame length).
    pub error_power: f64,
    /// Set when a reflection coefficient had to be clamped.
    pub flagged: bool,
}

impl LpcFrame {
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }
}

fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|lag| x.iter().zip(&x[lag..]).map(|(a, b)| a * b).sum())
        .collect()
}

/// Levinson-Durbin on the biased autocorrelation of `frame`.
pub fn lpc_analyze(frame: &[f64], order: usize) -> Result<LpcFrame> {
    if order < 2 {
        return Err(Error::InvalidInput(format!("LPC order {order} must be >= 2")));
    }
    if frame.len() <= order {
        return Err(Error::InvalidInput(format!(
            "frame of {} samples too short for order {order}",
            frame.len()
        )));
    }
    let r = autocorrelation(frame, order);
    if r[0] == 0.0 {
        return Ok(LpcFrame {
            coeffs: vec![0.0; order],
            residual: vec![0.0; frame.len()],
            error_power: 0.0,
            flagged: false,
        });
    }

    let mut a = vec![0.0; order];
    let mut prev = vec![0.0; order];
    let mut err = r[0];
    let mut flagged = false;
    for i in 0..order {
        // perfectly predictable frame, higher orders add nothing
        if err <= r[0] * 1e-15 {
            break;
        }
        let acc = r[i + 1] - (0..i).map(|j| a[j] * r[i - j]).sum::<f64>();
        let mut k = acc / err;
        if k.abs() >= 1.0 || !k.is_finite() {
            k = MAX_REFLECTION.copysign(k);
            flagged = true;
        }
        prev[..i].copy_from_slice(&a[..i]);
        a[i] = k;
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        err *= 1.0 - k * k;
    }

    Ok(LpcFrame {
        residual: inverse_filter(&a, frame),
        coeffs: a,
        error_power: err / frame.len() as f64,
        flagged,
    })
}

/// Applies `A(z)` to `x` with zero initial state.
pub fn inverse_filter(coeffs: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            let pred: f64 = coeffs
                .iter()
                .enumerate()
                .take(n)
                .map(|(k, a)| a * x[n - k - 1])
                .sum();
            x[n] - pred
        })
        .collect()
}

/// Conjugate-closed multiset of poles. Each complex pair is stored once; the
/// conjugate is implied, so closure is exact by construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoleSet {
    real: Vec<f64>,
    pairs: Vec<Complex64>,
}

impl PoleSet {
    pub fn new(real: Vec<f64>, pairs: Vec<Complex64>) -> Self {
        Self { real, pairs }
    }

    /// Builds a set from an explicit pole list whose non-real members must
    /// come in bit-exact conjugate pairs.
    pub fn from_poles(poles: &[Complex64]) -> Result<Self> {
        let mut real = Vec::new();
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        for &p in poles {
            match p.im.partial_cmp(&0.0) {
                Some(std::cmp::Ordering::Equal) => real.push(p.re),
                Some(std::cmp::Ordering::Greater) => upper.push(p),
                Some(std::cmp::Ordering::Less) => lower.push(p),
                None => return Err(Error::InvalidInput("pole is NaN".into())),
            }
        }
        for p in &upper {
            let idx = lower
                .iter()
                .position(|q| *q == p.conj())
                .ok_or(Error::NotConjugateClosed)?;
            lower.swap_remove(idx);
        }
        if !lower.is_empty() {
            return Err(Error::NotConjugateClosed);
        }
        Ok(Self { real, pairs: upper })
    }

    pub fn real(&self) -> &[f64] {
        &self.real
    }

    /// One representative per conjugate pair.
    pub fn pairs(&self) -> &[Complex64] {
        &self.pairs
    }

    pub fn order(&self) -> usize {
        self.real.len() + 2 * self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order() == 0
    }

    /// Every pole, pairs first (each followed by its conjugate), then reals.
    pub fn poles(&self) -> Vec<Complex64> {
        self.pairs
            .iter()
            .flat_map(|p| [*p, p.conj()])
            .chain(self.real.iter().map(|&r| Complex64::new(r, 0.0)))
            .collect()
    }

    pub fn max_radius(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Radially pulls every pole beyond `limit` back onto it. Returns how
    /// many poles (counting conjugates) moved.
    pub fn clamp_radius(&mut self, limit: f64) -> usize {
        let mut moved = 0;
        for r in &mut self.real {
            if r.abs() > limit {
                *r = limit.copysign(*r);
                moved += 1;
            }
        }
        for p in &mut self.pairs {
            let (radius, angle) = p.to_polar();
            if radius > limit {
                *p = Complex64::from_polar(limit, angle);
                moved += 2;
            }
        }
        moved
    }
}

/// Poles of the synthesis filter `1/A(z)` via companion-matrix eigenvalues.
pub fn roots_of_lpc(coeffs: &[f64]) -> Result<PoleSet> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("non-finite LPC coefficient".into()));
    }
    // trailing zero coefficients are roots at the origin
    let n = coeffs.iter().rposition(|&c| c != 0.0).map_or(0, |i| i + 1);
    let mut real = vec![0.0; coeffs.len() - n];
    if n == 0 {
        return Ok(PoleSet::new(real, Vec::new()));
    }

    let eig = companion_roots(&coeffs[..n])?;

    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for z in &eig {
        if z.im.abs() <= CONJUGATE_TOLERANCE {
            real.push(z.re);
        } else if z.im > 0.0 {
            upper.push(*z);
        } else {
            lower.push(*z);
        }
    }
    if upper.len() != lower.len() {
        return Err(Error::NotConjugateClosed);
    }
    let mut pairs = Vec::with_capacity(upper.len());
    for z in upper {
        let (idx, dist) = lower
            .iter()
            .enumerate()
            .map(|(i, w)| (i, (z - w.conj()).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("counts checked above");
        if dist > CONJUGATE_TOLERANCE {
            debug!("conjugate mismatch {dist:e} at {z}");
        }
        let w = lower.swap_remove(idx);
        pairs.push((z + w.conj()) * 0.5);
    }
    Ok(PoleSet::new(real, pairs))
}

/// Roots of `z^n - a_1 z^(n-1) - ... - a_n` with `a_n != 0`. A polynomial in
/// `z^g` is solved in `w = z^g` first; the symmetric spectrum of its full
/// companion matrix can stall the QR iteration.
fn companion_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let stride = coeffs
        .iter()
        .enumerate()
        .filter(|(_, &a)| a != 0.0)
        .fold(0, |g, (i, _)| gcd(g, i + 1));
    if stride > 1 {
        let reduced: Vec<f64> = coeffs.iter().skip(stride - 1).step_by(stride).copied().collect();
        let g = stride as f64;
        return Ok(companion_roots(&reduced)?
            .into_iter()
            .flat_map(|w| {
                let (r, phi) = w.to_polar();
                (0..stride).map(move |m| Complex64::from_polar(r.powf(1.0 / g), (phi + 2.0 * PI * m as f64) / g))
            })
            .collect());
    }
    let n = coeffs.len();
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for (j, &a) in coeffs.iter().enumerate() {
        companion[(0, j)] = a;
    }
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    let schur = Schur::try_new(companion, f64::EPSILON, 1000 * n).ok_or(Error::RootFinding { frame: 0 })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Expands `prod (z - p_i)` and returns the predictor coefficients
/// `a_1..a_p`. Conjugate pairs are multiplied out as real quadratics, so the
/// result is real without truncation.
pub fn lpc_from_poles(poles: &PoleSet) -> Vec<f64> {
    // monic polynomial, highest power first
    let mut poly = vec![1.0];
    let mut mul = |factor: &[f64]| {
        let mut next = vec![0.0; poly.len() + factor.len() - 1];
        for (i, a) in poly.iter().enumerate() {
            for (j, b) in factor.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        poly = next;
    };
    for p in &poles.pairs {
        mul(&[1.0, -2.0 * p.re, p.norm_sqr()]);
    }
    for &r in &poles.real {
        mul(&[1.0, -r]);
    }
    poly[1..].iter().map(|c| -c).collect()
}

/// Memory of the all-pole synthesis filter, oldest sample first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterState {
    history: Vec<f64>,
}

impl FilterState {
    pub fn zero(order: usize) -> Self {
        Self {
            history: vec![0.0; order],
        }
    }

    /// State holding the last `order` samples of `output` (zero-padded on
    /// the old side when `output` is shorter).
    pub fn from_output(output: &[f64], order: usize) -> Self {
        let take = output.len().min(order);
        let mut history = vec![0.0; order - take];
        history.extend_from_slice(&output[output.len() - take..]);
        Self { history }
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    fn past(&self, back: usize) -> f64 {
        // back >= 1 counts samples before the frame start
        self.history
            .len()
            .checked_sub(back)
            .map_or(0.0, |i| self.history[i])
    }
}

/// Runs `residual` through `1/A(z)` starting from `state`. Returns the
/// output and the filter memory at its end.
pub fn synthesize(
    coeffs: &[f64],
    residual: &[f64],
    state: &FilterState,
) -> Result<(Vec<f64>, FilterState)> {
    let mut y = Vec::with_capacity(residual.len());
    for (n, &e) in residual.iter().enumerate() {
        let feedback: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let lag = k + 1;
                let past = if lag <= n { y[n - lag] } else { state.past(lag - n) };
                a * past
            })
            .sum();
        let v = e + feedback;
        if !v.is_finite() || v.abs() > INSTABILITY_LIMIT {
            return Err(Error::Unstable {
                frame: 0,
                magnitude: v.abs(),
            });
        }
        y.push(v);
    }
    let mut joined = state.history.clone();
    joined.extend_from_slice(&y);
    let next = FilterState::from_output(&joined, coeffs.len());
    Ok((y, next))
}
