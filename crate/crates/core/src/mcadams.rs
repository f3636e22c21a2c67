//! McAdams-coefficient anonymization: frame-wise LPC analysis, pole angle
//! warping `phi -> phi^alpha` (with optional radius contraction) and
//! resynthesis from the retained residual.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::audio::{self, AudioBuffer, FrameConfig};
use crate::error::{Error, Result};
use crate::lpc::{self, FilterState, PoleSet};
use crate::manifest::Manifest;

/// Transformed poles are pulled back inside this radius.
pub const MAX_POLE_RADIUS: f64 = 0.999;

/// Output peak after normalization, applied only when the raw output clips.
pub const NORMALIZED_PEAK: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McAdamsConfig {
    pub alpha: f64,
    /// 1.0 leaves radii alone; 0.975 gives the radius-contraction variant.
    pub radius_scale: f64,
    pub lpc_order: usize,
    pub frame: FrameConfig,
    /// Reserved for per-utterance random alpha; ignored by the deterministic
    /// transform.
    pub seed: Option<u64>,
}

impl Default for McAdamsConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            radius_scale: 1.0,
            lpc_order: lpc::default_order(audio::DEFAULT_SAMPLE_RATE),
            frame: FrameConfig::default(),
            seed: None,
        }
    }
}

impl McAdamsConfig {
    /// Angle warping plus radii contracted to 0.975.
    pub fn with_radius_contraction() -> Self {
        Self {
            radius_scale: 0.975,
            ..Self::default()
        }
    }

    pub fn identity() -> Self {
        Self {
            alpha: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidInput(format!("alpha {} must be > 0", self.alpha)));
        }
        if !(self.radius_scale > 0.0 && self.radius_scale <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "radius scale {} must be in (0, 1]",
                self.radius_scale
            )));
        }
        if self.lpc_order < 2 || self.lpc_order >= self.frame.frame_len {
            return Err(Error::InvalidInput(format!(
                "LPC order {} must be in 2..{}",
                self.lpc_order, self.frame.frame_len
            )));
        }
        self.frame.validate()
    }
}

/// Warps pole angles and scales radii without the stability clamp.
///
/// Each pair representative at angle `phi` (taken in `(0, pi)`) moves to
/// `phi^alpha`; its conjugate follows. Real poles, including those at
/// angle 0 or `pi`, keep their angle and only have their radius scaled.
pub fn transform_poles_unclamped(poles: &PoleSet, cfg: &McAdamsConfig) -> PoleSet {
    let pairs = poles
        .pairs()
        .iter()
        .map(|p| {
            let (radius, angle) = p.to_polar();
            let warped = angle.abs().powf(cfg.alpha).copysign(angle);
            num_complex::Complex64::from_polar(radius * cfg.radius_scale, warped)
        })
        .collect();
    let real = poles.real().iter().map(|r| r * cfg.radius_scale).collect();
    PoleSet::new(real, pairs)
}

/// [`transform_poles_unclamped`] followed by clamping every radius to
/// [`MAX_POLE_RADIUS`]. Also returns the number of poles that were clamped.
pub fn transform_poles(poles: &PoleSet, cfg: &McAdamsConfig) -> (PoleSet, usize) {
    let mut out = transform_poles_unclamped(poles, cfg);
    let clamped = out.clamp_radius(MAX_POLE_RADIUS);
    (out, clamped)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McAdamsOutput {
    pub audio: AudioBuffer,
    pub frames: usize,
    /// Frames where either a reflection coefficient or a pole was clamped.
    pub frames_flagged: usize,
    pub poles_clamped: usize,
    /// Set when the output exceeded full scale and was rescaled.
    pub normalized: bool,
}

/// Anonymizes one utterance. The output has the input's length and rate.
pub fn anonymize_mcadams(input: &AudioBuffer, cfg: &McAdamsConfig) -> Result<McAdamsOutput> {
    cfg.validate()?;
    if input.is_empty() {
        return Err(Error::InvalidInput("cannot anonymize empty audio".into()));
    }
    let frame = cfg.frame;
    // pad so every input sample sits under a full set of overlapping frames
    let lead = frame.frame_len - frame.hop;
    let min_len = lead + input.len() + lead;
    let padded_len = if min_len <= frame.frame_len {
        frame.frame_len
    } else {
        frame.frame_len + (min_len - frame.frame_len).div_ceil(frame.hop) * frame.hop
    };
    let mut padded = vec![0.0; padded_len];
    padded[lead..lead + input.len()].copy_from_slice(input.samples());
    let padded = AudioBuffer::new(padded, input.sample_rate_hz())?;

    let analysis = audio::frame_signal(&padded, frame)?;
    let mut frames_flagged = 0;
    let mut poles_clamped = 0;
    let mut synthesized = Vec::with_capacity(analysis.frames.len());
    for (i, windowed) in analysis.frames.iter().enumerate() {
        let lpc = lpc::lpc_analyze(windowed, cfg.lpc_order)?;
        let poles = lpc::roots_of_lpc(&lpc.coeffs).map_err(|e| e.at_frame(i))?;
        let (moved, clamped) = transform_poles(&poles, cfg);
        let coeffs = lpc::lpc_from_poles(&moved);
        // zero state per frame: the residual was taken with zero state, and
        // overlap-add handles continuity between frames
        let (y, _) = lpc::synthesize(&coeffs, &lpc.residual, &FilterState::zero(coeffs.len()))
            .map_err(|e| e.at_frame(i))?;
        if lpc.flagged || clamped > 0 {
            frames_flagged += 1;
        }
        poles_clamped += clamped;
        synthesized.push(y);
    }

    let out = audio::overlap_add(&synthesized, frame, padded_len, input.sample_rate_hz())?;
    let mut samples = out.samples()[lead..lead + input.len()].to_vec();
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let normalized = peak > 1.0;
    if normalized {
        samples.iter_mut().for_each(|s| *s *= NORMALIZED_PEAK / peak);
    }
    Ok(McAdamsOutput {
        audio: AudioBuffer::new(samples, input.sample_rate_hz())?,
        frames: analysis.frames.len(),
        frames_flagged,
        poles_clamped,
        normalized,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileStats {
    pub frames: usize,
    pub frames_flagged: usize,
    pub poles_clamped: usize,
    pub samples_clamped: usize,
    pub normalized: bool,
    pub runtime_ms: f64,
}

/// Reads, anonymizes and writes one file.
pub fn anonymize_file(input: &Path, output: &Path, cfg: &McAdamsConfig) -> Result<FileStats> {
    let start = Instant::now();
    let audio = audio::read_wav(input)?;
    let result = anonymize_mcadams(&audio, cfg)?;
    if let Some(parent) = output.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let written = audio::write_wav(output, &result.audio)?;
    Ok(FileStats {
        frames: result.frames,
        frames_flagged: result.frames_flagged,
        poles_clamped: result.poles_clamped,
        samples_clamped: written.clamped,
        normalized: result.normalized,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileReport {
    pub utt_id: String,
    pub input: PathBuf,
    pub output: PathBuf,
    #[serde(flatten)]
    pub outcome: FileOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum FileOutcome {
    Ok(FileStats),
    Failed { error: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DirectoryReport {
    pub files: Vec<FileReport>,
}

impl DirectoryReport {
    pub fn failures(&self) -> impl Iterator<Item = &FileReport> {
        self.files
            .iter()
            .filter(|f| matches!(f.outcome, FileOutcome::Failed { .. }))
    }

    pub fn has_failures(&self) -> bool {
        self.failures().next().is_some()
    }
}

/// Keeps only the normal components of `path`, so joining it never leaves the
/// base directory.
fn contained(path: &Path) -> PathBuf {
    path.components()
        .filter(|c| matches!(c, std::path::Component::Normal(_)))
        .collect()
}

/// Anonymizes every manifest entry from `in_dir` into the same relative path
/// under `out_dir`, using at most `jobs` worker threads. Per-file failures
/// are recorded and do not stop the run.
pub fn anonymize_directory(
    in_dir: &Path,
    out_dir: &Path,
    cfg: &McAdamsConfig,
    manifest: &Manifest,
    jobs: usize,
) -> Result<DirectoryReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let files = pool.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|entry| {
                let input = in_dir.join(&entry.path);
                let output = out_dir.join(contained(&entry.path));
                let outcome = match anonymize_file(&input, &output, cfg) {
                    Ok(stats) => FileOutcome::Ok(stats),
                    Err(e) => {
                        warn!("{}: {e}", entry.utt_id);
                        FileOutcome::Failed {
                            error: e.to_string(),
                        }
                    }
                };
                FileReport {
                    utt_id: entry.utt_id.clone(),
                    input,
                    output,
                    outcome,
                }
            })
            .collect::<Vec<_>>()
    });
    info!(
        "anonymized {} of {} files",
        files.len() - files.iter().filter(|f| matches!(f.outcome, FileOutcome::Failed { .. })).count(),
        files.len()
    );
    Ok(DirectoryReport { files })
}
