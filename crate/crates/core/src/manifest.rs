//! Utterance manifests (`utt_id<TAB>relative_path`) and utterance-to-speaker
//! maps (`utt_id<SP>speaker_id`).

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub utt_id: String,
    /// Relative to the manifest's base directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (lineno, line) in content_lines(text) {
            let (utt, path) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(origin, lineno, "expected `utt_id<TAB>path`"))?;
            let (utt, path) = (utt.trim(), path.trim());
            if utt.is_empty() || path.is_empty() {
                return Err(Error::parse(origin, lineno, "empty field"));
            }
            if !seen.insert(utt.to_string()) {
                return Err(Error::parse(origin, lineno, format!("duplicate utterance {utt}")));
            }
            entries.push(ManifestEntry {
                utt_id: utt.to_string(),
                path: PathBuf::from(path),
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{}\t{}", e.utt_id, e.path.display());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Utterance id to speaker id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpeakerMap(pub BTreeMap<String, String>);

impl SpeakerMap {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in content_lines(text) {
            let mut fields = line.split_whitespace();
            match (fields.next(), fields.next(), fields.next()) {
                (Some(utt), Some(spk), None) => {
                    if map.insert(utt.to_string(), spk.to_string()).is_some() {
                        return Err(Error::parse(origin, lineno, format!("duplicate utterance {utt}")));
                    }
                }
                _ => return Err(Error::parse(origin, lineno, "expected `utt_id speaker_id`")),
            }
        }
        Ok(Self(map))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn speaker(&self, utt: &str) -> Option<&str> {
        self.0.get(utt).map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        self.0
            .iter()
            .fold(String::new(), |mut out, (u, s)| {
                let _ = writeln!(out, "{u} {s}");
                out
            })
    }
}

/// Non-blank, non-comment lines with 1-based line numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
}
