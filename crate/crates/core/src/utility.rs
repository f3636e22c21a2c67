//! Word error rate and the speaker-clustering metrics (purity and macro-F1).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifest::content_lines;

/// Upper-cases, drops punctuation other than apostrophes, and splits on
/// whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    text.chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace() || *c == '\'')
        .flat_map(char::to_uppercase)
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub utt_id: String,
    pub tokens: Vec<String>,
}

impl Transcript {
    pub fn new(utt_id: impl Into<String>, text: &str) -> Self {
        Self {
            utt_id: utt_id.into(),
            tokens: normalize(text),
        }
    }
}

/// Transcripts keyed by utterance id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TranscriptSet(pub BTreeMap<String, Transcript>);

impl TranscriptSet {
    /// One `utt_id word word ...` line per utterance; the word list may be
    /// empty.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut set = BTreeMap::new();
        for (lineno, line) in content_lines(text) {
            let line = line.trim();
            let (utt, words) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            if set.insert(utt.to_string(), Transcript::new(utt, words)).is_some() {
                return Err(Error::parse(origin, lineno, format!("duplicate utterance {utt}")));
            }
        }
        Ok(Self(set))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        self.0.values().fold(String::new(), |mut out, t| {
            let _ = writeln!(out, "{} {}", t.utt_id, t.tokens.join(" "));
            out
        })
    }

    pub fn insert(&mut self, t: Transcript) {
        self.0.insert(t.utt_id.clone(), t);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Edit counts of a word alignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct WerCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_words: usize,
}

impl WerCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `errors / ref_words`; NaN when there are no reference words.
    pub fn wer(&self) -> f64 {
        self.errors() as f64 / self.ref_words as f64
    }
}

impl Add for WerCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            substitutions: self.substitutions + o.substitutions,
            deletions: self.deletions + o.deletions,
            insertions: self.insertions + o.insertions,
            ref_words: self.ref_words + o.ref_words,
        }
    }
}

impl AddAssign for WerCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Minimum-edit alignment with unit costs.
///
/// Among equal-cost alignments the one with the fewest deletions plus
/// insertions wins, which fixes the S/D/I split uniquely.
pub fn align(reference: &[String], hypothesis: &[String]) -> WerCounts {
    #[derive(Clone, Copy)]
    struct Cell {
        cost: usize,
        gaps: usize,
        s: usize,
        d: usize,
        i: usize,
    }
    let better = |a: Cell, b: Cell| (a.cost, a.gaps) < (b.cost, b.gaps);
    let (n, m) = (reference.len(), hypothesis.len());
    let mut prev: Vec<Cell> = (0..=m)
        .map(|j| Cell { cost: j, gaps: j, s: 0, d: 0, i: j })
        .collect();
    for r in 1..=n {
        let mut row = Vec::with_capacity(m + 1);
        row.push(Cell { cost: r, gaps: r, s: 0, d: r, i: 0 });
        for h in 1..=m {
            let diag = prev[h - 1];
            let mut best = if reference[r - 1] == hypothesis[h - 1] {
                diag
            } else {
                Cell { cost: diag.cost + 1, s: diag.s + 1, ..diag }
            };
            let up = prev[h];
            let del = Cell { cost: up.cost + 1, gaps: up.gaps + 1, d: up.d + 1, ..up };
            if better(del, best) {
                best = del;
            }
            let left = row[h - 1];
            let ins = Cell { cost: left.cost + 1, gaps: left.gaps + 1, i: left.i + 1, ..left };
            if better(ins, best) {
                best = ins;
            }
            row.push(best);
        }
        prev = row;
    }
    let c = prev[m];
    WerCounts {
        substitutions: c.s,
        deletions: c.d,
        insertions: c.i,
        ref_words: n,
    }
}

pub fn wer(reference: &Transcript, hypothesis: &Transcript) -> Result<WerCounts> {
    if reference.tokens.is_empty() {
        return Err(Error::EmptyReference(Some(reference.utt_id.clone())));
    }
    Ok(align(&reference.tokens, &hypothesis.tokens))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CorpusWer {
    pub counts: WerCounts,
    pub utterances: usize,
    /// Reference utterances with no hypothesis; scored as all deletions.
    pub missing: Vec<String>,
}

impl CorpusWer {
    pub fn wer(&self) -> f64 {
        self.counts.wer()
    }
}

/// Summed edit counts over every reference utterance.
pub fn corpus_wer(references: &TranscriptSet, hypotheses: &TranscriptSet) -> Result<CorpusWer> {
    if references.is_empty() {
        return Err(Error::EmptyReference(None));
    }
    let mut out = CorpusWer::default();
    for (utt, reference) in &references.0 {
        let counts = match hypotheses.0.get(utt) {
            Some(h) => wer(reference, h)?,
            None => {
                out.missing.push(utt.clone());
                wer(reference, &Transcript { utt_id: utt.clone(), tokens: Vec::new() })?
            }
        };
        out.counts += counts;
        out.utterances += 1;
    }
    Ok(out)
}

pub const MAX_CLUSTERS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recording {
    pub id: String,
    pub speaker: String,
    pub is_distractor: bool,
}

/// Recordings and their grouping into 1 to 4 clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusteringTrial {
    recordings: Vec<Recording>,
    /// Indices into `recordings`.
    clusters: Vec<Vec<usize>>,
}

impl ClusteringTrial {
    pub fn new(recordings: Vec<Recording>, clusters: Vec<Vec<String>>) -> Result<Self> {
        let bad = |m: String| Error::InvalidPartition(m);
        if !(1..=MAX_CLUSTERS).contains(&clusters.len()) {
            return Err(bad(format!("{} clusters, expected 1 to {MAX_CLUSTERS}", clusters.len())));
        }
        let mut index = HashMap::new();
        for (i, r) in recordings.iter().enumerate() {
            if index.insert(r.id.as_str(), i).is_some() {
                return Err(bad(format!("recording {} listed twice", r.id)));
            }
        }
        let mut seen = vec![false; recordings.len()];
        let mut by_index = Vec::with_capacity(clusters.len());
        for c in &clusters {
            if c.is_empty() {
                return Err(bad("empty cluster".into()));
            }
            let mut members = Vec::with_capacity(c.len());
            for id in c {
                let &i = index
                    .get(id.as_str())
                    .ok_or_else(|| bad(format!("unknown recording {id}")))?;
                if std::mem::replace(&mut seen[i], true) {
                    return Err(bad(format!("recording {id} in two clusters")));
                }
                members.push(i);
            }
            by_index.push(members);
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(bad(format!("recording {} is not clustered", recordings[i].id)));
        }
        Ok(Self {
            recordings,
            clusters: by_index,
        })
    }

    pub fn recordings(&self) -> &[Recording] {
        &self.recordings
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    /// Distinct speakers in id order.
    pub fn speakers(&self) -> Vec<&str> {
        self.recordings
            .iter()
            .map(|r| r.speaker.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// `counts[c][s]`: recordings of speaker `s` (in `speakers()` order) in
    /// cluster `c`.
    fn contingency(&self) -> (Vec<&str>, Vec<Vec<usize>>) {
        let speakers = self.speakers();
        let counts = self
            .clusters
            .iter()
            .map(|members| {
                let mut row = vec![0; speakers.len()];
                for &m in members {
                    let s = speakers
                        .binary_search(&self.recordings[m].speaker.as_str())
                        .expect("speaker listed");
                    row[s] += 1;
                }
                row
            })
            .collect();
        (speakers, counts)
    }
}

/// Parses blank-line separated blocks of
/// `recording_id speaker cluster_index is_distractor` lines.
pub fn parse_clustering_trials(text: &str, origin: &str) -> Result<Vec<ClusteringTrial>> {
    let mut trials = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    let lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.starts_with('#'))
        .chain(std::iter::once((0, "")));
    for (lineno, line) in lines {
        if !line.is_empty() {
            block.push((lineno, line));
            continue;
        }
        if block.is_empty() {
            continue;
        }
        let first = block[0].0;
        let mut recordings = Vec::new();
        let mut clusters: BTreeMap<u32, Vec<String>> = BTreeMap::new();
        for (lineno, line) in block.drain(..) {
            let f: Vec<&str> = line.split_whitespace().collect();
            let [id, spk, cluster, distractor] = f[..] else {
                return Err(Error::parse(
                    origin,
                    lineno,
                    "expected `recording_id speaker cluster_index is_distractor`",
                ));
            };
            let cluster: u32 = cluster
                .parse()
                .map_err(|_| Error::parse(origin, lineno, format!("bad cluster index `{cluster}`")))?;
            let is_distractor = match distractor {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(Error::parse(origin, lineno, format!("bad distractor flag `{other}`"))),
            };
            recordings.push(Recording {
                id: id.to_string(),
                speaker: spk.to_string(),
                is_distractor,
            });
            clusters.entry(cluster).or_default().push(id.to_string());
        }
        let trial = ClusteringTrial::new(recordings, clusters.into_values().collect())
            .map_err(|e| Error::parse(origin, first, e.to_string()))?;
        trials.push(trial);
    }
    Ok(trials)
}

pub fn load_clustering_trials(path: impl AsRef<Path>) -> Result<Vec<ClusteringTrial>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_clustering_trials(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Purity {
    pub purity: f64,
    /// Speaker assigned to each cluster by the best assignment.
    pub assignment: Vec<Option<String>>,
    /// The best assignment gives a cluster to the distractor speaker.
    pub distractor_assigned: bool,
}

/// Best overlap over injective assignments of speakers to clusters, divided
/// by the number of recordings. Clusters may be left unassigned, and the
/// distractor speaker is assignable like any other.
pub fn clustering_purity(trial: &ClusteringTrial) -> Purity {
    fn search(counts: &[Vec<usize>], c: usize, used: &mut Vec<bool>, pick: &mut Vec<Option<usize>>, best: &mut (usize, Vec<Option<usize>>)) {
        if c == counts.len() {
            let total = pick
                .iter()
                .zip(counts)
                .map(|(p, row)| p.map_or(0, |s| row[s]))
                .sum();
            if total > best.0 {
                *best = (total, pick.clone());
            }
            return;
        }
        pick.push(None);
        search(counts, c + 1, used, pick, best);
        pick.pop();
        for s in 0..used.len() {
            if !used[s] {
                used[s] = true;
                pick.push(Some(s));
                search(counts, c + 1, used, pick, best);
                pick.pop();
                used[s] = false;
            }
        }
    }
    let (speakers, counts) = trial.contingency();
    let mut best = (0, vec![None; counts.len()]);
    search(&counts, 0, &mut vec![false; speakers.len()], &mut Vec::new(), &mut best);
    let distractors: BTreeSet<&str> = trial
        .recordings
        .iter()
        .filter(|r| r.is_distractor)
        .map(|r| r.speaker.as_str())
        .collect();
    let assignment: Vec<Option<String>> = best.1.iter().map(|p| p.map(|s| speakers[s].to_string())).collect();
    Purity {
        purity: best.0 as f64 / trial.recordings.len() as f64,
        distractor_assigned: assignment.iter().flatten().any(|s| distractors.contains(s.as_str())),
        assignment,
    }
}

/// Macro-averaged F1 over the speakers in the trial.
///
/// Each cluster is labelled with its most frequent speaker (lowest id on
/// ties); several clusters may share a label.
pub fn clustering_f1(trial: &ClusteringTrial) -> f64 {
    let (speakers, counts) = trial.contingency();
    let labels: Vec<usize> = counts
        .iter()
        .map(|row| {
            // first maximum, so the lowest speaker id wins ties
            row.iter()
                .enumerate()
                .fold((0, 0), |best, (s, &n)| if n > best.1 { (s, n) } else { best })
                .0
        })
        .collect();
    let f1_sum: f64 = (0..speakers.len())
        .map(|s| {
            let (mut tp, mut predicted) = (0, 0);
            for (row, &label) in counts.iter().zip(&labels) {
                if label == s {
                    tp += row[s];
                    predicted += row.iter().sum::<usize>();
                }
            }
            let actual: usize = counts.iter().map(|row| row[s]).sum();
            if tp == 0 {
                return 0.0;
            }
            let precision = tp as f64 / predicted as f64;
            let recall = tp as f64 / actual as f64;
            2.0 * precision * recall / (precision + recall)
        })
        .sum();
    f1_sum / speakers.len() as f64
}
