//! Audio buffers, WAV I/O, framing and overlap-add reconstruction.

use std::f64::consts::PI;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

/// Canonical sample rate of the evaluation data.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Summed window envelope below this value is left un-normalized in overlap-add.
pub const ENVELOPE_FLOOR: f64 = 1e-6;

/// Mono PCM audio. Samples read from disk lie in `[-1, 1]`; intermediate
/// results may exceed that range until they are written.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

/// Reads a PCM WAV file (16-bit integer or 32-bit float). Multi-channel
/// files are reduced to channel 0.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels.max(1));
    if channels > 1 {
        warn!(
            "{}: {} channels, using channel 0",
            path.display(),
            spec.channels
        );
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (format, bits) => {
            return Err(Error::UnsupportedEncoding(format!(
                "{}: {bits}-bit {format:?}",
                path.display()
            )))
        }
    };

    let samples: Vec<f64> = interleaved.into_iter().step_by(channels).collect();
    if samples.is_empty() {
        return Err(Error::EmptyAudio {
            path: path.to_path_buf(),
        });
    }
    AudioBuffer::new(samples, spec.sample_rate)
        .map_err(|e| Error::io(path, e))
}

fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::Unsupported => {
            Error::UnsupportedEncoding(format!("{}: not PCM or IEEE float", path.display()))
        }
        hound::Error::FormatError(msg) => {
            Error::UnsupportedEncoding(format!("{}: {msg}", path.display()))
        }
        other => Error::io(path, other),
    }
}

/// Outcome of a WAV write.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteStats {
    /// Samples outside `[-1, 1]` that were clamped before quantization.
    pub clamped: usize,
}

/// Writes 16-bit mono PCM at the buffer's sample rate.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<WriteStats> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| Error::io(path, e))?;
    let mut stats = WriteStats::default();
    for &s in &audio.samples {
        if !(-1.0..=1.0).contains(&s) {
            stats.clamped += 1;
        }
        writer
            .write_sample(quantize_i16(s))
            .map_err(|e| Error::io(path, e))?;
    }
    writer.finalize().map_err(|e| Error::io(path, e))?;
    if stats.clamped > 0 {
        warn!("{}: clamped {} samples", path.display(), stats.clamped);
    }
    Ok(stats)
}

pub(crate) fn quantize_i16(s: f64) -> i16 {
    (s.clamp(-1.0, 1.0) * 32768.0)
        .round()
        .clamp(-32768.0, 32767.0) as i16
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    Rectangular,
    #[default]
    Hann,
}

impl Window {
    /// Periodic window of length `len`. The periodic Hann sums to exactly
    /// one at 50% overlap.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for FrameConfig {
    /// 20 ms frames with a 10 ms hop at 16 kHz.
    fn default() -> Self {
        Self::for_rate(DEFAULT_SAMPLE_RATE)
    }
}

impl FrameConfig {
    /// 20 ms frame, 10 ms hop, Hann analysis window.
    pub fn for_rate(sample_rate_hz: u32) -> Self {
        let frame_len = ((sample_rate_hz as usize / 50) & !1).max(2);
        Self {
            frame_len,
            hop: frame_len / 2,
            window: Window::Hann,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(Error::InvalidInput(format!(
                "hop {} must be in 1..={}",
                self.hop, self.frame_len
            )));
        }
        if self.frame_len % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "frame length {} must be even",
                self.frame_len
            )));
        }
        Ok(())
    }

    /// Number of frames for a signal of `len` samples (after padding short
    /// signals to one frame).
    pub fn frame_count(&self, len: usize) -> usize {
        let len = len.max(self.frame_len);
        (len - self.frame_len) / self.hop + 1
    }
}

/// Windowed analysis frames plus what is needed to put them back together.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    pub frames: Vec<Vec<f64>>,
    pub config: FrameConfig,
    /// Length of the signal before padding.
    pub signal_len: usize,
    pub sample_rate_hz: u32,
}

pub fn frame_signal(audio: &AudioBuffer, cfg: FrameConfig) -> Result<Frames> {
    cfg.validate()?;
    let window = cfg.window.coefficients(cfg.frame_len);
    let x = audio.samples();
    let count = cfg.frame_count(x.len());
    let frames = (0..count)
        .map(|i| {
            let start = i * cfg.hop;
            window
                .iter()
                .enumerate()
                .map(|(n, w)| w * x.get(start + n).copied().unwrap_or(0.0))
                .collect()
        })
        .collect();
    Ok(Frames {
        frames,
        config: cfg,
        signal_len: x.len(),
        sample_rate_hz: audio.sample_rate_hz(),
    })
}

/// Overlap-adds frames at `cfg.hop` spacing and divides out the summed
/// analysis-window envelope wherever it exceeds [`ENVELOPE_FLOOR`].
pub fn overlap_add(
    frames: &[Vec<f64>],
    cfg: FrameConfig,
    out_len: usize,
    sample_rate_hz: u32,
) -> Result<AudioBuffer> {
    cfg.validate()?;
    if let Some((i, f)) = frames
        .iter()
        .enumerate()
        .find(|(_, f)| f.len() != cfg.frame_len)
    {
        return Err(Error::InvalidInput(format!(
            "frame {i} has {} samples, expected {}",
            f.len(),
            cfg.frame_len
        )));
    }
    let window = cfg.window.coefficients(cfg.frame_len);
    let mut out = vec![0.0; out_len];
    let mut envelope = vec![0.0; out_len];
    for (i, frame) in frames.iter().enumerate() {
        let start = i * cfg.hop;
        for (n, (s, w)) in frame.iter().zip(&window).enumerate() {
            let Some(slot) = out.get_mut(start + n) else {
                break;
            };
            *slot += s;
            envelope[start + n] += w;
        }
    }
    for (s, e) in out.iter_mut().zip(&envelope) {
        if *e > ENVELOPE_FLOOR {
            *s /= e;
        }
    }
    AudioBuffer::new(out, sample_rate_hz)
}
