//! Deterministic fixtures shared by the benchmarks.

use vpkit_core::synth::{steady_vowel, Formant};
use vpkit_core::{AudioBuffer, EmbeddingSet, ScoreSet};

/// Low-discrepancy values in `[0, 1)`.
fn weyl(i: usize, k: f64) -> f64 {
    (i as f64 * k).fract()
}

pub fn vowel(seconds: f64) -> AudioBuffer {
    steady_vowel(
        &[Formant::new(700.0, 80.0), Formant::new(1200.0, 90.0), Formant::new(2600.0, 120.0)],
        120.0,
        seconds,
        16_000,
    )
    .expect("valid vowel parameters")
}

/// Targets shifted up by one against unit-spread impostors.
pub fn scores(n: usize) -> ScoreSet {
    let spread = |i: usize, k: f64| 4.0 * weyl(i, k) - 2.0;
    let tar: Vec<f64> = (0..n / 2).map(|i| spread(i, 0.618_033_988_75) + 1.0).collect();
    let non: Vec<f64> = (0..n - n / 2).map(|i| spread(i, 0.754_877_666_25)).collect();
    ScoreSet::from_scores(&tar, &non)
}

pub fn embeddings(count: usize, dim: usize, speakers: usize, tag: &str) -> EmbeddingSet {
    let mut set = EmbeddingSet::new(dim).expect("dim > 0");
    for i in 0..count {
        let v = (0..dim).map(|k| weyl(i * dim + k, 0.569_840_290_99) - 0.5).collect();
        set.insert(format!("{tag}{i}"), format!("{tag}spk{}", i % speakers), v)
            .expect("unique ids");
    }
    set
}
