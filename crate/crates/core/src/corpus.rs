//! Synthetic multi-speaker corpus for end-to-end runs.
//!
//! Every speaker is a fixed source-filter recipe: a vocal-tract length factor
//! scaling the vowel formants, speaker-specific fixed resonances, a pitch,
//! and a glottal spectral tilt. Utterances are short sequences of vowel
//! "words" from a ten-word vocabulary, so transcripts are available for WER.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::audio::{write_wav, AudioBuffer, DEFAULT_SAMPLE_RATE};
use crate::embed::RngKey;
use crate::error::{Error, Result};
use crate::synth::{excitation, normalize_peak, resonator_cascade, Formant};

/// Words and their (F1, F2, F3) in Hz for a reference vocal tract.
pub const VOCABULARY: [(&str, [f64; 3]); 10] = [
    ("SEE", [270.0, 2290.0, 3010.0]),
    ("BIT", [390.0, 1990.0, 2550.0]),
    ("BED", [530.0, 1840.0, 2480.0]),
    ("CAT", [660.0, 1720.0, 2410.0]),
    ("CAR", [730.0, 1090.0, 2440.0]),
    ("SAW", [570.0, 840.0, 2410.0]),
    ("BOOK", [440.0, 1020.0, 2240.0]),
    ("BOOT", [300.0, 870.0, 2240.0]),
    ("BIRD", [490.0, 1350.0, 1690.0]),
    ("CUP", [640.0, 1190.0, 2390.0]),
];

const WORDS_PER_UTTERANCE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusSpec {
    pub speakers: usize,
    pub utterances: usize,
    pub seed: u64,
    /// Extra speakers written to `pool/` as an external embedding pool.
    pub pool_speakers: usize,
    pub sample_rate_hz: u32,
}

impl CorpusSpec {
    pub fn new(speakers: usize, utterances: usize, seed: u64) -> Self {
        Self {
            speakers,
            utterances,
            seed,
            pool_speakers: 0,
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Voice {
    vtl: f64,
    f0: f64,
    /// Fixed resonances added to every word.
    upper: [Formant; 3],
    tilt: f64,
}

impl Voice {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Self {
            vtl: rng.random_range(0.78..1.25),
            f0: rng.random_range(85.0..260.0),
            upper: [
                Formant::new(rng.random_range(1000.0..3000.0), rng.random_range(80.0..160.0)),
                Formant::new(rng.random_range(3200.0..4200.0), rng.random_range(100.0..250.0)),
                Formant::new(rng.random_range(4500.0..6500.0), rng.random_range(150.0..350.0)),
            ],
            tilt: rng.random_range(0.2..0.95),
        }
    }

    fn word(&self, formants: [f64; 3], len: usize, sample_rate_hz: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let f0 = self.f0 * rng.random_range(0.95..1.05);
        let mut src = excitation(f0, len, sample_rate_hz, 0.01, 0.02, rng);
        let mut prev = 0.0;
        for s in &mut src {
            prev = (1.0 - self.tilt) * *s + self.tilt * prev;
            *s = prev;
        }
        let nyquist = f64::from(sample_rate_hz) / 2.0 - 200.0;
        let mut bank: Vec<Formant> = formants
            .iter()
            .zip([60.0, 90.0, 120.0])
            .map(|(f, bw)| {
                let f = (f * self.vtl * rng.random_range(0.95..1.05)).min(nyquist);
                Formant::new(f, bw)
            })
            .collect();
        bank.extend(self.upper.iter().filter(|f| f.freq_hz < nyquist));
        let mut y = resonator_cascade(&src, &bank, sample_rate_hz);
        let ramp = (0.01 * f64::from(sample_rate_hz)) as usize;
        for i in 0..ramp.min(len / 2) {
            let g = 0.5 - 0.5 * (std::f64::consts::PI * i as f64 / ramp as f64).cos();
            y[i] *= g;
            y[len - 1 - i] *= g;
        }
        y
    }

    fn utterance(&self, sample_rate_hz: u32, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<&'static str>) {
        let sr = f64::from(sample_rate_hz);
        let secs = |s: f64| (s * sr) as usize;
        let mut out = vec![0.0; secs(0.05)];
        let mut words = Vec::with_capacity(WORDS_PER_UTTERANCE);
        for _ in 0..WORDS_PER_UTTERANCE {
            let (word, formants) = VOCABULARY[rng.random_range(0..VOCABULARY.len())];
            let len = secs(rng.random_range(0.18..0.28));
            out.extend(self.word(formants, len, sample_rate_hz, rng));
            out.extend(std::iter::repeat_n(0.0, secs(rng.random_range(0.04..0.08))));
            words.push(word);
        }
        out.extend(std::iter::repeat_n(0.0, secs(0.05)));
        normalize_peak(&mut out, 0.7);
        (out, words)
    }
}

fn speaker_rng(seed: u64, group: &str, index: usize) -> ChaCha8Rng {
    RngKey {
        seed,
        role: None,
        key: format!("corpus/{group}/{index}"),
    }
    .rng()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub speakers: usize,
    pub files: Vec<PathBuf>,
    pub enroll: usize,
    pub trial: usize,
    pub target_trials: usize,
    pub nontarget_trials: usize,
    pub pool_files: usize,
}

pub fn speaker_id(i: usize) -> String {
    format!("spk{i:02}")
}

pub fn utterance_id(speaker: usize, utt: usize) -> String {
    format!("{}-u{utt:02}", speaker_id(speaker))
}

/// Writes the corpus under `out_dir`:
///
/// - `wav/<utt>.wav` audio
/// - `enroll.scp` (first utterance of each speaker) and `trial.scp` (the rest)
/// - `trials.key` pairing every enrollment with every trial utterance
/// - `utt2spk`, `text`, and a `plan.ini` template
/// - with `pool_speakers > 0`, `pool/<utt>.wav` and `pool.scp`
pub fn gen_corpus(spec: &CorpusSpec, out_dir: &Path) -> Result<CorpusSummary> {
    if spec.speakers < 2 || spec.utterances < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 speakers and 2 utterances per speaker, got {} and {}",
            spec.speakers, spec.utterances
        )));
    }
    let sr = spec.sample_rate_hz;
    std::fs::create_dir_all(out_dir.join("wav")).map_err(|e| Error::io(out_dir, e))?;
    let mut summary = CorpusSummary {
        speakers: spec.speakers,
        files: Vec::new(),
        enroll: 0,
        trial: 0,
        target_trials: 0,
        nontarget_trials: 0,
        pool_files: 0,
    };
    let (mut enroll, mut trial, mut utt2spk, mut text) = (String::new(), String::new(), String::new(), String::new());
    let mut enroll_ids = Vec::new();
    let mut trial_ids = Vec::new();
    for s in 0..spec.speakers {
        let mut rng = speaker_rng(spec.seed, "eval", s);
        let voice = Voice::draw(&mut rng);
        for u in 0..spec.utterances {
            let id = utterance_id(s, u);
            let (audio, words) = voice.utterance(sr, &mut rng);
            let rel = PathBuf::from("wav").join(format!("{id}.wav"));
            write_wav(out_dir.join(&rel), &AudioBuffer::new(audio, sr)?)?;
            let line = format!("{id}\t{}\n", rel.display());
            if u == 0 {
                enroll.push_str(&line);
                enroll_ids.push((id.clone(), s));
            } else {
                trial.push_str(&line);
                trial_ids.push((id.clone(), s));
            }
            let _ = writeln!(utt2spk, "{id} {}", speaker_id(s));
            let _ = writeln!(text, "{id} {}", words.join(" "));
            summary.files.push(out_dir.join(rel));
        }
    }
    let mut key = String::new();
    for (e, es) in &enroll_ids {
        for (t, ts) in &trial_ids {
            let label = if es == ts {
                summary.target_trials += 1;
                "target"
            } else {
                summary.nontarget_trials += 1;
                "nontarget"
            };
            let _ = writeln!(key, "{e} {t} {label}");
        }
    }
    summary.enroll = enroll_ids.len();
    summary.trial = trial_ids.len();

    let mut pool = String::new();
    if spec.pool_speakers > 0 {
        std::fs::create_dir_all(out_dir.join("pool")).map_err(|e| Error::io(out_dir, e))?;
        for p in 0..spec.pool_speakers {
            let mut rng = speaker_rng(spec.seed, "pool", p);
            let voice = Voice::draw(&mut rng);
            let spk = format!("pool{p:03}");
            for u in 0..2 {
                let id = format!("{spk}-u{u:02}");
                let (audio, _) = voice.utterance(sr, &mut rng);
                let rel = PathBuf::from("pool").join(format!("{id}.wav"));
                write_wav(out_dir.join(&rel), &AudioBuffer::new(audio, sr)?)?;
                let _ = writeln!(pool, "{id}\t{}", rel.display());
                let _ = writeln!(utt2spk, "{id} {spk}");
                summary.pool_files += 1;
            }
        }
    }

    let write = |name: &str, body: &str| {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
    };
    write("enroll.scp", &enroll)?;
    write("trial.scp", &trial)?;
    write("trials.key", &key)?;
    write("utt2spk", &utt2spk)?;
    write("text", &text)?;
    if spec.pool_speakers > 0 {
        write("pool.scp", &pool)?;
    }
    write("plan.ini", &plan_template(spec))?;
    Ok(summary)
}

fn plan_template(spec: &CorpusSpec) -> String {
    let mut s = format!(
        "[plan]\n\
         condition = ignorant_oa\n\
         anonymizer = mcadams\n\
         seed = {}\n\
         output_dir = results\n\
         \n\
         [data]\n\
         enroll_manifest = enroll.scp\n\
         trial_manifest = trial.scp\n\
         trials = trials.key\n\
         utt2spk = utt2spk\n\
         \n\
         [mcadams]\n\
         alpha = 0.8\n\
         radius_scale = 1.0\n",
        spec.seed
    );
    if spec.pool_speakers > 0 {
        let n = spec.pool_speakers.min(200);
        let _ = write!(
            s,
            "\n[embed]\npool_manifest = pool.scp\nn = {n}\nn_star = {}\nlevel = speaker\n",
            n.div_ceil(2)
        );
    }
    s.push_str("\n[transcripts]\nreference = text\n");
    s
}
