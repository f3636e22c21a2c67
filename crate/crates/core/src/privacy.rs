//! Verification-style privacy metrics over LLR-scaled trial scores, and
//! speaker similarity matrices with the de-identification and
//! voice-distinctiveness measures derived from them.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifest::content_lines;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Target,
    Impostor,
}

impl Label {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "target" => Some(Label::Target),
            "nontarget" | "impostor" => Some(Label::Impostor),
            _ => None,
        }
    }

    pub fn as_key_str(self) -> &'static str {
        match self {
            Label::Target => "target",
            Label::Impostor => "nontarget",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub enroll: String,
    pub test: String,
    pub score: f64,
    pub label: Label,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub trials: Vec<Trial>,
}

impl ScoreSet {
    /// Unnamed trials from target and impostor score lists.
    pub fn from_scores(targets: &[f64], impostors: &[f64]) -> Self {
        let mk = |label: Label, prefix: &'static str| {
            move |(i, s): (usize, &f64)| Trial {
                enroll: format!("{prefix}{i}"),
                test: format!("{prefix}{i}"),
                score: *s,
                label,
            }
        };
        let trials = targets
            .iter()
            .enumerate()
            .map(mk(Label::Target, "t"))
            .chain(impostors.iter().enumerate().map(mk(Label::Impostor, "n")))
            .collect();
        Self { trials }
    }

    pub fn targets(&self) -> Vec<f64> {
        self.scores_of(Label::Target)
    }

    pub fn impostors(&self) -> Vec<f64> {
        self.scores_of(Label::Impostor)
    }

    fn scores_of(&self, label: Label) -> Vec<f64> {
        self.trials
            .iter()
            .filter(|t| t.label == label)
            .map(|t| t.score)
            .collect()
    }

    fn split_checked(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let (tar, non) = (self.targets(), self.impostors());
        if tar.is_empty() {
            return Err(Error::EmptyClass("target"));
        }
        if non.is_empty() {
            return Err(Error::EmptyClass("impostor"));
        }
        if tar.iter().chain(&non).any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("non-finite score".into()));
        }
        Ok((tar, non))
    }

    /// Joins a score file (`enroll trial score`) with a trial key
    /// (`enroll trial target|nontarget`). Every scored trial must be keyed.
    pub fn from_texts(scores: &str, scores_origin: &str, key: &str, key_origin: &str) -> Result<Self> {
        let key = parse_key(key, key_origin)?;
        let trials = parse_score_file(scores, scores_origin)?
            .into_iter()
            .map(|(enroll, test, score)| {
                let label = *key.get(&(enroll.clone(), test.clone())).ok_or_else(|| {
                    Error::InvalidInput(format!("{scores_origin}: trial {enroll} {test} is not in the key"))
                })?;
                Ok(Trial {
                    enroll,
                    test,
                    score,
                    label,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { trials })
    }

    pub fn load(scores: impl AsRef<Path>, key: impl AsRef<Path>) -> Result<Self> {
        let (scores, key) = (scores.as_ref(), key.as_ref());
        let s = std::fs::read_to_string(scores).map_err(|e| Error::io(scores, e))?;
        let k = std::fs::read_to_string(key).map_err(|e| Error::io(key, e))?;
        Self::from_texts(&s, &scores.display().to_string(), &k, &key.display().to_string())
    }

    /// Score-file text, one `enroll trial score` line per trial.
    pub fn to_score_text(&self) -> String {
        self.trials.iter().fold(String::new(), |mut out, t| {
            let _ = writeln!(out, "{} {} {}", t.enroll, t.test, t.score);
            out
        })
    }
}

/// `enroll trial score` lines in file order.
pub fn parse_score_file(text: &str, origin: &str) -> Result<Vec<(String, String, f64)>> {
    content_lines(text)
        .map(|(lineno, line)| {
            parse_score_line(line)
                .map(|(e, t, s)| (e.to_string(), t.to_string(), s))
                .ok_or_else(|| Error::parse(origin, lineno, "expected `enroll_id trial_id score`"))
        })
        .collect()
}

fn parse_score_line(line: &str) -> Option<(&str, &str, f64)> {
    let mut f = line.split_whitespace();
    let (e, t, s) = (f.next()?, f.next()?, f.next()?);
    if f.next().is_some() {
        return None;
    }
    Some((e, t, s.parse().ok()?))
}

/// Trial key: `(enroll, trial) -> label`.
pub type TrialKey = HashMap<(String, String), Label>;

/// Keyed trials in file order.
pub fn parse_trial_list(text: &str, origin: &str) -> Result<Vec<(String, String, Label)>> {
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for (lineno, line) in content_lines(text) {
        let mut f = line.split_whitespace();
        let (Some(e), Some(t), Some(l), None) = (f.next(), f.next(), f.next(), f.next()) else {
            return Err(Error::parse(origin, lineno, "expected `enroll_id trial_id target|nontarget`"));
        };
        let label = Label::parse(l)
            .ok_or_else(|| Error::parse(origin, lineno, format!("unknown label `{l}`")))?;
        if seen.insert((e.to_string(), t.to_string()), label).is_some() {
            return Err(Error::parse(origin, lineno, format!("duplicate trial {e} {t}")));
        }
        out.push((e.to_string(), t.to_string(), label));
    }
    Ok(out)
}

pub fn load_trial_list(path: impl AsRef<Path>) -> Result<Vec<(String, String, Label)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trial_list(&text, &path.display().to_string())
}

pub fn parse_key(text: &str, origin: &str) -> Result<TrialKey> {
    Ok(parse_trial_list(text, origin)?
        .into_iter()
        .map(|(e, t, l)| ((e, t), l))
        .collect())
}

/// Key-file text for keyed trials.
pub fn trial_list_text(trials: &[(String, String, Label)]) -> String {
    trials.iter().fold(String::new(), |mut out, (e, t, l)| {
        let _ = writeln!(out, "{e} {t} {}", l.as_key_str());
        out
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eer {
    /// Fraction in `[0, 1]`.
    pub eer: f64,
    pub threshold: f64,
}

/// Equal error rate by threshold sweep.
///
/// Every distinct score is a candidate threshold, with false alarms counted
/// as impostors `>= t` and misses as targets `< t`. The difference
/// `P_miss - P_fa` is non-decreasing in `t`; the EER is taken where it
/// reaches zero, interpolating linearly between the two bracketing
/// thresholds when it jumps over zero. A final point past the largest score
/// (`P_fa = 0`, `P_miss = 1`) guarantees a crossing.
pub fn eer(scores: &ScoreSet) -> Result<Eer> {
    let (mut tar, mut non) = scores.split_checked()?;
    tar.sort_by(f64::total_cmp);
    non.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = tar.iter().chain(&non).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let (nt, nn) = (tar.len() as f64, non.len() as f64);
    let (mut tar_below, mut non_below) = (0usize, 0usize);
    let mut prev: Option<(f64, f64, f64)> = None; // (threshold, p_fa, p_miss)
    for &t in &thresholds {
        while tar_below < tar.len() && tar[tar_below] < t {
            tar_below += 1;
        }
        while non_below < non.len() && non[non_below] < t {
            non_below += 1;
        }
        let p_miss = tar_below as f64 / nt;
        let p_fa = (non.len() - non_below) as f64 / nn;
        if p_miss >= p_fa {
            return Ok(crossing(prev, (t, p_fa, p_miss)));
        }
        prev = Some((t, p_fa, p_miss));
    }
    let last = *thresholds.last().expect("non-empty classes");
    let at_end = crossing(prev, (last, 0.0, 1.0));
    Ok(Eer {
        eer: at_end.eer,
        threshold: last,
    })
}

fn crossing(prev: Option<(f64, f64, f64)>, cur: (f64, f64, f64)) -> Eer {
    let (t1, fa1, miss1) = cur;
    let d1 = miss1 - fa1;
    match prev {
        Some((t0, fa0, miss0)) if d1 > 0.0 => {
            let d0 = miss0 - fa0;
            let w = -d0 / (d1 - d0);
            Eer {
                eer: fa0 + w * (fa1 - fa0),
                threshold: t0 + w * (t1 - t0),
            }
        }
        _ => Eer {
            eer: fa1,
            threshold: t1,
        },
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Running mean; exact when all values are equal, unlike `sum / n`.
fn mean(values: impl Iterator<Item = f64>) -> f64 {
    values
        .enumerate()
        .fold(0.0, |m, (i, v)| m + (v - m) / (i + 1) as f64)
}

fn cllr_of(tar: &[f64], non: &[f64]) -> f64 {
    let c_tar = mean(tar.iter().map(|s| softplus(-s)));
    let c_non = mean(non.iter().map(|s| softplus(*s)));
    0.5 * (c_tar + c_non) / std::f64::consts::LN_2
}

/// Log-likelihood-ratio cost in bits.
pub fn cllr(scores: &ScoreSet) -> Result<f64> {
    let (tar, non) = scores.split_checked()?;
    Ok(cllr_of(&tar, &non))
}

/// Non-decreasing least-squares fit with unit weights (pool adjacent
/// violators).
pub fn pav(y: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, n1) = blocks[blocks.len() - 1];
            let (s0, n0) = blocks[blocks.len() - 2];
            if s0 / n0 as f64 <= s1 / n1 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().expect("len > 1") = (s0 + s1, n0 + n1);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, n)| std::iter::repeat_n(s / n as f64, n))
        .collect()
}

/// Scores mapped to the LLRs of their optimal monotone calibration.
///
/// Trials are sorted by score (targets before impostors on ties, so tied
/// scores are pooled), one target and one impostor pseudo-trial are added at
/// each end, and the PAV posteriors are converted to LLRs by removing the
/// empirical prior log-odds.
pub fn optimal_llrs(scores: &ScoreSet) -> Result<Vec<(f64, Label)>> {
    let (tar, non) = scores.split_checked()?;
    let mut order: Vec<(f64, Label)> = tar
        .iter()
        .map(|s| (*s, Label::Target))
        .chain(non.iter().map(|s| (*s, Label::Impostor)))
        .collect();
    order.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| (a.1 == Label::Impostor).cmp(&(b.1 == Label::Impostor)))
    });
    let is_target = |l: Label| if l == Label::Target { 1.0 } else { 0.0 };
    let mut ideal = vec![1.0, 0.0];
    ideal.extend(order.iter().map(|(_, l)| is_target(*l)));
    ideal.extend([1.0, 0.0]);
    let posterior = pav(&ideal);
    let prior_log_odds = (tar.len() as f64 / non.len() as f64).ln();
    Ok(order
        .iter()
        .zip(&posterior[2..posterior.len() - 2])
        .map(|((_, label), p)| ((p / (1.0 - p)).ln() - prior_log_odds, *label))
        .collect())
}

/// Cllr after optimal monotone calibration.
///
/// The padded PAV calibration can cost slightly more than the raw scores on
/// very small, already well-calibrated sets; since the identity map is
/// itself monotone the result is capped at the raw Cllr.
pub fn cllr_min(scores: &ScoreSet) -> Result<f64> {
    let raw = cllr(scores)?;
    let calibrated = optimal_llrs(scores)?;
    let tar: Vec<f64> = calibrated
        .iter()
        .filter(|(_, l)| *l == Label::Target)
        .map(|(s, _)| *s)
        .collect();
    let non: Vec<f64> = calibrated
        .iter()
        .filter(|(_, l)| *l == Label::Impostor)
        .map(|(s, _)| *s)
        .collect();
    Ok(cllr_of(&tar, &non).min(raw))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Which data a segment comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Original,
    Anonymized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixMode {
    /// Original against original.
    Oo,
    /// Rows original, columns anonymized.
    Oa,
    /// Anonymized against anonymized.
    Aa,
}

impl MatrixMode {
    pub fn sides(self) -> (Side, Side) {
        match self {
            MatrixMode::Oo => (Side::Original, Side::Original),
            MatrixMode::Oa => (Side::Original, Side::Anonymized),
            MatrixMode::Aa => (Side::Anonymized, Side::Anonymized),
        }
    }
}

impl std::str::FromStr for MatrixMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oo" => Ok(MatrixMode::Oo),
            "oa" => Ok(MatrixMode::Oa),
            "aa" => Ok(MatrixMode::Aa),
            other => Err(Error::InvalidInput(format!("unknown matrix mode `{other}`"))),
        }
    }
}

/// Speaker-by-speaker similarities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    speakers: Vec<String>,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(speakers: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = speakers.len();
        if values.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "{n} speakers need {} values, got {}",
                n * n,
                values.len()
            )));
        }
        Ok(Self { speakers, values })
    }

    pub fn speakers(&self) -> &[String] {
        &self.speakers
    }

    pub fn size(&self) -> usize {
        self.speakers.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.size() + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Header row and column of speaker ids.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("speaker");
        for s in &self.speakers {
            let _ = write!(out, ",{s}");
        }
        out.push('\n');
        for (i, s) in self.speakers.iter().enumerate() {
            out.push_str(s);
            for j in 0..self.size() {
                let _ = write!(out, ",{}", self.get(i, j));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::parse(origin, 1, "empty matrix"))?;
        let speakers: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
        let mut values = Vec::with_capacity(speakers.len() * speakers.len());
        let mut rows = 0;
        for (i, line) in lines {
            let mut cells = line.split(',');
            let name = cells.next().unwrap_or_default().trim();
            if speakers.get(rows).map(String::as_str) != Some(name) {
                return Err(Error::parse(origin, i + 1, format!("row `{name}` out of order")));
            }
            for c in cells {
                values.push(
                    c.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::parse(origin, i + 1, e.to_string()))?,
                );
            }
            rows += 1;
        }
        Self::new(speakers, values).map_err(|e| Error::parse(origin, 0, e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }
}

/// Builds the similarity matrix from per-segment LLRs.
///
/// `llr(a, side_a, b, side_b)` scores segment `a` against segment `b`. Cell
/// `(i, j)` is the sigmoid of the mean LLR between speaker `i`'s segments on
/// the row side and speaker `j`'s on the column side. When a speaker is
/// compared with itself on the same side, identical segments are skipped and
/// each unordered pair is counted once.
pub fn similarity_matrix<F>(
    segments: &BTreeMap<String, Vec<String>>,
    mode: MatrixMode,
    llr: F,
) -> Result<SimilarityMatrix>
where
    F: Fn(&str, Side, &str, Side) -> f64 + Sync,
{
    let (row_side, col_side) = mode.sides();
    let speakers: Vec<&String> = segments.keys().collect();
    for (spk, segs) in segments {
        if segs.is_empty() {
            return Err(Error::InvalidInput(format!("speaker {spk} has no segments")));
        }
        if row_side == col_side && segs.len() < 2 {
            return Err(Error::SingleSegment(spk.clone()));
        }
    }
    let n = speakers.len();
    let values = (0..n * n)
        .into_par_iter()
        .map(|cell| {
            let (mut i, mut j) = (cell / n, cell % n);
            // same-side cells use the same trials both ways; mirror for exact symmetry
            if row_side == col_side && i > j {
                std::mem::swap(&mut i, &mut j);
            }
            let (a, b) = (&segments[speakers[i]], &segments[speakers[j]]);
            let (sum, count) = if i == j && row_side == col_side {
                let mut acc = (0.0, 0usize);
                for k in 0..a.len() {
                    for l in k + 1..a.len() {
                        acc.0 += llr(&a[k], row_side, &a[l], col_side);
                        acc.1 += 1;
                    }
                }
                acc
            } else {
                let mut acc = (0.0, 0usize);
                for x in a {
                    for y in b {
                        acc.0 += llr(x, row_side, y, col_side);
                        acc.1 += 1;
                    }
                }
                acc
            };
            sigmoid(sum / count as f64)
        })
        .collect();
    SimilarityMatrix::new(speakers.into_iter().cloned().collect(), values)
}

/// `|mean(diagonal) - mean(off-diagonal)|`.
pub fn diag_dominance(m: &SimilarityMatrix) -> Result<f64> {
    let n = m.size();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "diagonal dominance needs at least 2 speakers, got {n}"
        )));
    }
    let diag = mean((0..n).map(|i| m.get(i, i)));
    let off = mean((0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m.get(i, j)));
    Ok((diag - off).abs())
}

fn check_same_speakers(a: &SimilarityMatrix, b: &SimilarityMatrix) -> Result<()> {
    if a.speakers() != b.speakers() {
        return Err(Error::InvalidInput("matrices cover different speakers".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeIdentification {
    /// Clamped to `[0, 1]`.
    pub value: f64,
    pub raw: f64,
    /// Set when the raw value was negative.
    pub clamped: bool,
}

/// `1 - D(m_oa) / D(m_oo)`.
pub fn de_identification(m_oa: &SimilarityMatrix, m_oo: &SimilarityMatrix) -> Result<DeIdentification> {
    check_same_speakers(m_oa, m_oo)?;
    let d_oo = diag_dominance(m_oo)?;
    if d_oo == 0.0 {
        return Err(Error::ZeroDominance);
    }
    let raw = 1.0 - diag_dominance(m_oa)? / d_oo;
    Ok(DeIdentification {
        value: raw.clamp(0.0, 1.0),
        raw,
        clamped: raw < 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VoiceDistinctiveness {
    /// `10 log10(D(m_aa) / D(m_oo))`; infinite or NaN when `degenerate`.
    pub gain_db: f64,
    pub degenerate: bool,
}

pub fn gain_voice_distinctiveness(
    m_aa: &SimilarityMatrix,
    m_oo: &SimilarityMatrix,
) -> Result<VoiceDistinctiveness> {
    check_same_speakers(m_aa, m_oo)?;
    let (d_aa, d_oo) = (diag_dominance(m_aa)?, diag_dominance(m_oo)?);
    let (gain_db, degenerate) = match (d_aa == 0.0, d_oo == 0.0) {
        (false, false) => (10.0 * (d_aa / d_oo).log10(), false),
        (true, false) => (f64::NEG_INFINITY, true),
        (false, true) => (f64::INFINITY, true),
        (true, true) => (f64::NAN, true),
    };
    Ok(VoiceDistinctiveness { gain_db, degenerate })
}
