//! Evaluation plans: anonymize, score, and report under the attack
//! conditions.
//!
//! A plan is an INI file with these sections:
//!
//! ```ini
//! [plan]
//! condition = ignorant_oa        ; unprotected_oo | ignorant_oa | lazy_informed_aa
//! anonymizer = mcadams           ; none | mcadams | embed
//! seed = 0
//! output_dir = results
//! jobs = 4                       ; optional
//!
//! [data]
//! enroll_manifest = enroll.scp
//! trial_manifest = trial.scp
//! trials = trials.key
//! utt2spk = utt2spk
//! scores = external.txt          ; optional, replaces the scorer for the condition
//!
//! [scorer]
//! calibration = fit              ; fit | identity | <slope>,<offset>
//!
//! [mcadams]
//! alpha = 0.8
//! radius_scale = 1.0
//! lpc_order = 20
//! frame_len = 320
//! hop = 160
//!
//! [embed]
//! pool_manifest = pool.scp
//! n = 200
//! n_star = 100
//! level = speaker                ; speaker | utterance
//! distance = cosine              ; cosine | plda
//! plda = model.txt
//!
//! [transcripts]
//! reference = text
//! hypothesis = hyp_anon.txt
//! original_hypothesis = hyp_orig.txt
//! ```
//!
//! Relative paths resolve against the plan's directory, and manifest entries
//! against their manifest's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use ini::Ini;
use log::{info, warn};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::audio::{FrameConfig, Window};
use crate::embed::{anonymize_embedding_set, AnonPolicy, Distance, EmbeddingSet, Level, PldaModel, Role};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, SpeakerMap};
use crate::mcadams::{anonymize_directory, McAdamsConfig};
use crate::privacy::{
    cllr, cllr_min, de_identification, eer, gain_voice_distinctiveness, load_trial_list, similarity_matrix, Label,
    MatrixMode, ScoreSet, Side, SimilarityMatrix,
};
use crate::scorer::{self, calibrate, featurize_manifest, score_trials, Calibration, UttVector, FEATURE_DIM};
use crate::utility::{corpus_wer, TranscriptSet};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Bumped whenever the CSV columns change.
pub const REPORT_CSV_VERSION: u32 = 1;
pub const REPORT_CSV_COLUMNS: [&str; 16] = [
    "format_version",
    "condition",
    "anonymizer",
    "enrollment",
    "targets",
    "impostors",
    "eer",
    "cllr",
    "cllr_min",
    "deid",
    "gvd_db",
    "wer",
    "score_source",
    "config_hash",
    "seed",
    "tool_version",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Original enrollment and trial data.
    UnprotectedOo,
    /// Original enrollment, anonymized trials.
    IgnorantOa,
    /// Both sides anonymized with the same system.
    LazyInformedAa,
    /// Retrains the verification model on anonymized data; not supported.
    SemiInformed,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::UnprotectedOo => "unprotected_oo",
            Condition::IgnorantOa => "ignorant_oa",
            Condition::LazyInformedAa => "lazy_informed_aa",
            Condition::SemiInformed => "semi_informed",
        }
    }

    /// Enrollment and trial sides.
    pub fn sides(self) -> (Side, Side) {
        match self {
            Condition::UnprotectedOo | Condition::SemiInformed => (Side::Original, Side::Original),
            Condition::IgnorantOa => (Side::Original, Side::Anonymized),
            Condition::LazyInformedAa => (Side::Anonymized, Side::Anonymized),
        }
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unprotected_oo" | "oo" => Ok(Condition::UnprotectedOo),
            "ignorant_oa" | "oa" => Ok(Condition::IgnorantOa),
            "lazy_informed_aa" | "aa" => Ok(Condition::LazyInformedAa),
            "semi_informed" | "semi_informed_aa" => Ok(Condition::SemiInformed),
            other => Err(Error::Plan(format!("unknown condition `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedSettings {
    pub pool_manifest: PathBuf,
    /// Seed and role are filled in per run.
    pub policy: AnonPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Anonymizer {
    None,
    McAdams(McAdamsConfig),
    Embed(EmbedSettings),
}

impl Anonymizer {
    pub fn name(&self) -> &'static str {
        match self {
            Anonymizer::None => "none",
            Anonymizer::McAdams(_) => "mcadams",
            Anonymizer::Embed(_) => "embed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationChoice {
    /// Logistic regression on the unprotected trials.
    Fit,
    Fixed(Calibration),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPlan {
    pub condition: Condition,
    pub anonymizer: Anonymizer,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub jobs: usize,
    pub enroll_manifest: PathBuf,
    pub trial_manifest: PathBuf,
    pub trials: PathBuf,
    pub utt2spk: PathBuf,
    pub scores: Option<PathBuf>,
    pub calibration: CalibrationChoice,
    pub reference: Option<PathBuf>,
    pub hypothesis: Option<PathBuf>,
    pub original_hypothesis: Option<PathBuf>,
    /// SHA-256 of the plan text.
    pub config_hash: String,
}

const KNOWN_KEYS: [(&str, &[&str]); 6] = [
    ("plan", &["condition", "anonymizer", "seed", "output_dir", "jobs"]),
    ("data", &["enroll_manifest", "trial_manifest", "trials", "utt2spk", "scores"]),
    ("scorer", &["calibration"]),
    ("mcadams", &["alpha", "radius_scale", "lpc_order", "frame_len", "hop"]),
    ("embed", &["pool_manifest", "n", "n_star", "level", "distance", "plda"]),
    ("transcripts", &["reference", "hypothesis", "original_hypothesis"]),
];

struct PlanText<'a> {
    ini: Ini,
    base: &'a Path,
}

impl PlanText<'_> {
    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.ini.section(Some(section)).and_then(|p| p.get(key)).map(str::trim)
    }

    fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key)
            .ok_or_else(|| Error::Plan(format!("missing `{key}` in [{section}]")))
    }

    fn parse<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(section, key)
            .map(|v| {
                v.parse()
                    .map_err(|e| Error::Plan(format!("[{section}] {key} = `{v}`: {e}")))
            })
            .transpose()
    }

    fn path(&self, section: &str, key: &str) -> Option<PathBuf> {
        self.get(section, key).map(|p| self.base.join(p))
    }

    fn require_path(&self, section: &str, key: &str) -> Result<PathBuf> {
        self.require(section, key).map(|p| self.base.join(p))
    }
}

impl EvalPlan {
    /// Parses plan text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Plan(e.to_string()))?;
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(Error::Plan(format!("`{k}` appears before any section")));
                }
                continue;
            };
            let known = KNOWN_KEYS
                .iter()
                .find(|(s, _)| *s == section)
                .ok_or_else(|| Error::Plan(format!("unknown section [{section}]")))?;
            if let Some((k, _)) = props.iter().find(|(k, _)| !known.1.contains(k)) {
                return Err(Error::Plan(format!("unknown key `{k}` in [{section}]")));
            }
        }
        let t = PlanText { ini, base };

        let condition: Condition = t.require("plan", "condition")?.parse()?;
        let seed = t.parse("plan", "seed")?.unwrap_or(0);
        let anonymizer = match t.get("plan", "anonymizer").unwrap_or("none") {
            "none" => Anonymizer::None,
            "mcadams" => {
                let mut cfg = McAdamsConfig::default();
                cfg.alpha = t.parse("mcadams", "alpha")?.unwrap_or(cfg.alpha);
                cfg.radius_scale = t.parse("mcadams", "radius_scale")?.unwrap_or(cfg.radius_scale);
                cfg.lpc_order = t.parse("mcadams", "lpc_order")?.unwrap_or(cfg.lpc_order);
                cfg.frame = FrameConfig {
                    frame_len: t.parse("mcadams", "frame_len")?.unwrap_or(cfg.frame.frame_len),
                    hop: t.parse("mcadams", "hop")?.unwrap_or(cfg.frame.hop),
                    window: Window::Hann,
                };
                cfg.validate().map_err(|e| Error::Plan(format!("[mcadams] {e}")))?;
                Anonymizer::McAdams(cfg)
            }
            "embed" => {
                let defaults = AnonPolicy::default();
                let level = match t.get("embed", "level").unwrap_or("speaker") {
                    "speaker" => Level::PerSpeaker,
                    "utterance" => Level::PerUtterance,
                    other => return Err(Error::Plan(format!("[embed] unknown level `{other}`"))),
                };
                let distance = match t.get("embed", "distance").unwrap_or("cosine") {
                    "cosine" => Distance::Cosine,
                    "plda" => {
                        let path = t.path("embed", "plda").ok_or_else(|| {
                            Error::Plan("[embed] distance = plda needs a `plda` model path".into())
                        })?;
                        Distance::Plda(Arc::new(PldaModel::load(path)?))
                    }
                    other => return Err(Error::Plan(format!("[embed] unknown distance `{other}`"))),
                };
                Anonymizer::Embed(EmbedSettings {
                    pool_manifest: t.require_path("embed", "pool_manifest")?,
                    policy: AnonPolicy {
                        n_far: t.parse("embed", "n")?.unwrap_or(defaults.n_far),
                        n_avg: t.parse("embed", "n_star")?.unwrap_or(defaults.n_avg),
                        distance,
                        level,
                        seed,
                        role: None,
                    },
                })
            }
            other => return Err(Error::Plan(format!("unknown anonymizer `{other}`"))),
        };
        let calibration = match t.get("scorer", "calibration").unwrap_or("fit") {
            "fit" => CalibrationChoice::Fit,
            "identity" => CalibrationChoice::Fixed(Calibration::IDENTITY),
            fixed => CalibrationChoice::Fixed(parse_calibration(fixed).map_err(|e| Error::Plan(e.to_string()))?),
        };
        let jobs = match t.parse::<usize>("plan", "jobs")? {
            Some(0) => return Err(Error::Plan("jobs must be at least 1".into())),
            Some(j) => j,
            None => default_jobs(),
        };
        let plan = Self {
            condition,
            anonymizer,
            seed,
            output_dir: t.require_path("plan", "output_dir")?,
            jobs,
            enroll_manifest: t.require_path("data", "enroll_manifest")?,
            trial_manifest: t.require_path("data", "trial_manifest")?,
            trials: t.require_path("data", "trials")?,
            utt2spk: t.require_path("data", "utt2spk")?,
            scores: t.path("data", "scores"),
            calibration,
            reference: t.path("transcripts", "reference"),
            hypothesis: t.path("transcripts", "hypothesis"),
            original_hypothesis: t.path("transcripts", "original_hypothesis"),
            config_hash: hex_sha256(text.as_bytes()),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.condition, &self.anonymizer) {
            (Condition::SemiInformed, _) => Err(Error::Plan(
                "the semi-informed condition retrains the verification model on anonymized data; \
                 model training is outside this toolkit"
                    .into(),
            )),
            (Condition::UnprotectedOo, a) if *a != Anonymizer::None => Err(Error::Plan(format!(
                "unprotected_oo evaluates original data only; set anonymizer = none (got {})",
                a.name()
            ))),
            (Condition::IgnorantOa | Condition::LazyInformedAa, Anonymizer::None) => Err(Error::Plan(format!(
                "{} needs an anonymizer",
                self.condition.as_str()
            ))),
            _ if self.jobs == 0 => Err(Error::Plan("jobs must be at least 1".into())),
            _ => Ok(()),
        }
    }
}

/// `slope,offset`.
pub fn parse_calibration(s: &str) -> Result<Calibration> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| Error::InvalidInput(format!("calibration `{s}` is not `slope,offset`")))?;
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|e| Error::InvalidInput(format!("calibration `{s}`: {e}")))
    };
    Calibration::new(num(a)?, num(b)?)
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Enrollment {
    /// One model per enrollment utterance.
    Utterance,
    /// One model per speaker, averaging their enrollment vectors.
    Speaker,
}

impl Enrollment {
    pub fn as_str(self) -> &'static str {
        match self {
            Enrollment::Utterance => "utterance",
            Enrollment::Speaker => "speaker",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    Scorer,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub condition: Condition,
    pub anonymizer: String,
    pub enrollment: Enrollment,
    pub targets: usize,
    pub impostors: usize,
    pub eer: f64,
    pub cllr: f64,
    pub cllr_min: f64,
    pub deid: Option<f64>,
    pub gvd_db: Option<f64>,
    pub wer: Option<f64>,
    pub score_source: ScoreSource,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub calibration: Calibration,
    /// Input role and path.
    pub inputs: Vec<(String, PathBuf)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub provenance: Provenance,
    pub rows: Vec<ReportRow>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub scores: Vec<(String, ScoreSet)>,
    #[serde(skip)]
    pub matrices: Vec<(MatrixMode, SimilarityMatrix)>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = REPORT_CSV_COLUMNS.join(",");
        out.push('\n');
        let p = &self.provenance;
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{REPORT_CSV_VERSION},{},{},{},{},{},{:.6},{:.6},{:.6},{},{},{},{},{},{},{}",
                r.condition.as_str(),
                r.anonymizer,
                r.enrollment.as_str(),
                r.targets,
                r.impostors,
                r.eer,
                r.cllr,
                r.cllr_min,
                opt(r.deid),
                opt(r.gvd_db),
                opt(r.wer),
                match r.score_source {
                    ScoreSource::Scorer => "scorer",
                    ScoreSource::External => "external",
                },
                p.config_hash,
                p.seed,
                p.tool_version,
            );
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut lines = vec![serde_json::json!({ "type": "provenance", "provenance": self.provenance })];
        lines.extend(self.rows.iter().map(|r| serde_json::json!({ "type": "row", "row": r })));
        lines.extend(self.warnings.iter().map(|w| serde_json::json!({ "type": "warning", "message": w })));
        lines.iter().fold(String::new(), |mut out, l| {
            let _ = writeln!(out, "{l}");
            out
        })
    }

    pub fn to_text(&self) -> String {
        let p = &self.provenance;
        let mut out = format!(
            "vpkit {} evaluation report\nconfig sha256 {}\nseed {}\ncalibration slope {:.6} offset {:.6}\n\ninputs\n",
            p.tool_version, p.config_hash, p.seed, p.calibration.slope, p.calibration.offset
        );
        for (role, path) in &p.inputs {
            let _ = writeln!(out, "  {role:<20} {}", path.display());
        }
        let _ = writeln!(
            out,
            "\n{:<18} {:<10} {:<10} {:>5} {:>5} {:>8} {:>8} {:>8} {:>8} {:>9} {:>8}",
            "condition", "anonymizer", "enrollment", "tar", "imp", "EER%", "Cllr", "Cllrmin", "DeID", "G_VD dB", "WER%"
        );
        let cell = |v: Option<f64>, scale: f64, prec: usize| v.map_or("-".to_string(), |x| format!("{:.*}", prec, x * scale));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<18} {:<10} {:<10} {:>5} {:>5} {:>8.2} {:>8.3} {:>8.3} {:>8} {:>9} {:>8}",
                r.condition.as_str(),
                r.anonymizer,
                r.enrollment.as_str(),
                r.targets,
                r.impostors,
                r.eer * 100.0,
                r.cllr,
                r.cllr_min,
                cell(r.deid, 1.0, 3),
                cell(r.gvd_db, 1.0, 2),
                cell(r.wer, 100.0, 2),
            );
        }
        if !self.warnings.is_empty() {
            out.push_str("\nwarnings\n");
            for w in &self.warnings {
                let _ = writeln!(out, "  {w}");
            }
        }
        out
    }

    /// Writes report.txt, report.csv, report.jsonl, score files, and
    /// similarity matrices into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let write = |name: &str, body: &str| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
        };
        write("report.txt", &self.to_text())?;
        write("report.csv", &self.to_csv())?;
        write("report.jsonl", &self.to_jsonl())?;
        for (name, set) in &self.scores {
            write(&format!("scores_{name}.txt"), &set.to_score_text())?;
        }
        for (mode, m) in &self.matrices {
            let mode = match mode {
                MatrixMode::Oo => "oo",
                MatrixMode::Oa => "oa",
                MatrixMode::Aa => "aa",
            };
            write(&format!("matrix_{mode}.csv"), &m.to_csv())?;
        }
        Ok(())
    }
}

/// Utterance vectors on each side; enrollment and trial utterances are
/// anonymized separately with different role salts.
struct Views {
    original: BTreeMap<String, UttVector>,
    anon_enroll: BTreeMap<String, UttVector>,
    anon_trial: BTreeMap<String, UttVector>,
}

impl Views {
    fn enroll(&self, side: Side) -> &BTreeMap<String, UttVector> {
        match side {
            Side::Original => &self.original,
            Side::Anonymized => &self.anon_enroll,
        }
    }

    fn trial(&self, side: Side) -> &BTreeMap<String, UttVector> {
        match side {
            Side::Original => &self.original,
            Side::Anonymized => &self.anon_trial,
        }
    }

    fn segment(&self, utt: &str, side: Side) -> Option<&UttVector> {
        match side {
            Side::Original => self.original.get(utt),
            Side::Anonymized => self.anon_trial.get(utt).or_else(|| self.anon_enroll.get(utt)),
        }
    }
}

struct Inputs {
    enroll: Manifest,
    trial: Manifest,
    trials: Vec<(String, String, Label)>,
    speakers: SpeakerMap,
    reference: Option<TranscriptSet>,
}

fn base_of(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn load_inputs(plan: &EvalPlan) -> Result<Inputs> {
    let enroll = Manifest::load(&plan.enroll_manifest)?;
    let trial = Manifest::load(&plan.trial_manifest)?;
    let trials = load_trial_list(&plan.trials)?;
    let speakers = SpeakerMap::load(&plan.utt2spk)?;
    let enroll_ids: BTreeSet<&str> = enroll.entries.iter().map(|e| e.utt_id.as_str()).collect();
    let trial_ids: BTreeSet<&str> = trial.entries.iter().map(|e| e.utt_id.as_str()).collect();
    for (e, t, _) in &trials {
        if !enroll_ids.contains(e.as_str()) {
            return Err(Error::InvalidInput(format!("trial enrollment {e} is not in the enrollment manifest")));
        }
        if !trial_ids.contains(t.as_str()) {
            return Err(Error::InvalidInput(format!("trial utterance {t} is not in the trial manifest")));
        }
    }
    if let Some(u) = enroll_ids.iter().chain(&trial_ids).find(|u| speakers.speaker(u).is_none()) {
        return Err(Error::InvalidInput(format!("utterance {u} has no speaker in utt2spk")));
    }
    let reference = plan.reference.as_ref().map(TranscriptSet::load).transpose()?;
    Ok(Inputs {
        enroll,
        trial,
        trials,
        speakers,
        reference,
    })
}

fn featurize_both(enroll: (&Path, &Manifest), trial: (&Path, &Manifest)) -> Result<BTreeMap<String, UttVector>> {
    let mut out = featurize_manifest(enroll.0, enroll.1)?;
    out.extend(featurize_manifest(trial.0, trial.1)?);
    Ok(out)
}

fn anonymize(
    plan: &EvalPlan,
    inputs: &Inputs,
    original: &BTreeMap<String, UttVector>,
    staging: &Path,
    warnings: &mut Vec<String>,
) -> Result<(BTreeMap<String, UttVector>, BTreeMap<String, UttVector>)> {
    match &plan.anonymizer {
        Anonymizer::None => Ok((original.clone(), original.clone())),
        Anonymizer::McAdams(cfg) => {
            let mut run = |manifest: &Manifest, source: &Path, role: &str| -> Result<BTreeMap<String, UttVector>> {
                let out = staging.join("anon").join(role);
                let report = anonymize_directory(base_of(source), &out, cfg, manifest, plan.jobs)?;
                if let Some(f) = report.failures().next() {
                    return Err(Error::InvalidInput(format!(
                        "{} of {} {role} files failed, first {}: {}",
                        report.failures().count(),
                        report.files.len(),
                        f.utt_id,
                        match &f.outcome {
                            crate::mcadams::FileOutcome::Failed { error } => error.as_str(),
                            crate::mcadams::FileOutcome::Ok(_) => "",
                        }
                    )));
                }
                let anonymized = Manifest {
                    entries: report
                        .files
                        .iter()
                        .map(|f| crate::manifest::ManifestEntry {
                            utt_id: f.utt_id.clone(),
                            path: f.output.clone(),
                        })
                        .collect(),
                };
                let vectors = featurize_manifest(Path::new(""), &anonymized)?;
                let silent = vectors.values().filter(|v| v.silent).count();
                if silent > 0 {
                    warnings.push(format!("{silent} anonymized {role} utterances were silent"));
                }
                Ok(vectors)
            };
            Ok((
                run(&inputs.enroll, &plan.enroll_manifest, "enroll")?,
                run(&inputs.trial, &plan.trial_manifest, "trial")?,
            ))
        }
        Anonymizer::Embed(settings) => {
            let pool_manifest = Manifest::load(&settings.pool_manifest)?;
            let pool_vectors = featurize_manifest(base_of(&settings.pool_manifest), &pool_manifest)?;
            let mut pool = EmbeddingSet::new(FEATURE_DIM)?;
            for (utt, v) in pool_vectors {
                let spk = inputs.speakers.speaker(&utt).unwrap_or(&utt).to_string();
                pool.insert(utt, spk, v.features)?;
            }
            let mut run = |manifest: &Manifest, role: Role| -> Result<BTreeMap<String, UttVector>> {
                let mut set = EmbeddingSet::new(FEATURE_DIM)?;
                for e in &manifest.entries {
                    let spk = inputs.speakers.speaker(&e.utt_id).expect("validated speaker");
                    set.insert(e.utt_id.clone(), spk, original[&e.utt_id].features.clone())?;
                }
                let policy = AnonPolicy {
                    seed: plan.seed,
                    role: Some(role),
                    ..settings.policy.clone()
                };
                let anon = anonymize_embedding_set(&set, &pool, &policy)?;
                warnings.extend(anon.warnings.iter().map(|w| format!("{}: {w}", role.as_str())));
                Ok(anon
                    .set
                    .iter()
                    .map(|(utt, emb)| {
                        let v = UttVector {
                            utt_id: utt.to_string(),
                            features: emb.vector.clone(),
                            silent: false,
                        };
                        (utt.to_string(), v)
                    })
                    .collect())
            };
            Ok((run(&inputs.enroll, Role::Enroll)?, run(&inputs.trial, Role::Trial)?))
        }
    }
}

/// Per-speaker mean enrollment vectors and the matching speaker-level trial
/// list.
fn speaker_enrollment(
    inputs: &Inputs,
    enroll_vectors: &BTreeMap<String, UttVector>,
) -> Result<(BTreeMap<String, UttVector>, Vec<(String, String, Label)>)> {
    let mut sums: BTreeMap<&str, (Vec<f64>, usize, bool)> = BTreeMap::new();
    for e in &inputs.enroll.entries {
        let spk = inputs.speakers.speaker(&e.utt_id).expect("validated speaker");
        let v = &enroll_vectors[&e.utt_id];
        let entry = sums.entry(spk).or_insert_with(|| (vec![0.0; v.features.len()], 0, true));
        entry.0.iter_mut().zip(&v.features).for_each(|(s, x)| *s += x);
        entry.1 += 1;
        entry.2 &= v.silent;
    }
    let models = sums
        .into_iter()
        .map(|(spk, (sum, n, silent))| {
            let v = UttVector {
                utt_id: spk.to_string(),
                features: sum.iter().map(|s| s / n as f64).collect(),
                silent,
            };
            (spk.to_string(), v)
        })
        .collect();
    let mut seen: BTreeMap<(String, String), Label> = BTreeMap::new();
    let mut trials = Vec::new();
    for (e, t, label) in &inputs.trials {
        let spk = inputs.speakers.speaker(e).expect("validated speaker").to_string();
        match seen.get(&(spk.clone(), t.clone())) {
            Some(l) if l != label => {
                return Err(Error::InvalidInput(format!(
                    "speaker {spk} and trial {t} carry both target and nontarget labels"
                )))
            }
            Some(_) => {}
            None => {
                seen.insert((spk.clone(), t.clone()), *label);
                trials.push((spk, t.clone(), *label));
            }
        }
    }
    Ok((models, trials))
}

struct Matrices {
    oo: SimilarityMatrix,
    oa: Option<SimilarityMatrix>,
    aa: Option<SimilarityMatrix>,
}

fn matrices(inputs: &Inputs, views: &Views, cal: Calibration, anonymized: bool, warnings: &mut Vec<String>) -> Result<Option<Matrices>> {
    let mut segments: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for e in inputs.enroll.entries.iter().chain(&inputs.trial.entries) {
        if seen.insert(e.utt_id.as_str()) {
            let spk = inputs.speakers.speaker(&e.utt_id).expect("validated speaker");
            segments.entry(spk.to_string()).or_default().push(e.utt_id.clone());
        }
    }
    let dropped: Vec<String> = segments
        .iter()
        .filter(|(_, s)| s.len() < 2)
        .map(|(k, _)| k.clone())
        .collect();
    if !dropped.is_empty() {
        warnings.push(format!(
            "similarity matrices skip speakers with a single utterance: {}",
            dropped.join(" ")
        ));
        segments.retain(|_, s| s.len() >= 2);
    }
    if segments.len() < 2 {
        warnings.push("fewer than 2 speakers with 2 utterances; DeID and G_VD not computed".into());
        return Ok(None);
    }
    let llr = |a: &str, sa: Side, b: &str, sb: Side| {
        let (va, vb) = (
            views.segment(a, sa).expect("featurized segment"),
            views.segment(b, sb).expect("featurized segment"),
        );
        scorer::score(va, vb, cal)
    };
    let oo = similarity_matrix(&segments, MatrixMode::Oo, llr)?;
    let (oa, aa) = if anonymized {
        (
            Some(similarity_matrix(&segments, MatrixMode::Oa, llr)?),
            Some(similarity_matrix(&segments, MatrixMode::Aa, llr)?),
        )
    } else {
        (None, None)
    };
    Ok(Some(Matrices { oo, oa, aa }))
}

fn deid_gvd(m: &Matrices, warnings: &mut Vec<String>) -> (Option<f64>, Option<f64>) {
    let oa = m.oa.as_ref().unwrap_or(&m.oo);
    let aa = m.aa.as_ref().unwrap_or(&m.oo);
    let deid = match de_identification(oa, &m.oo) {
        Ok(d) => {
            if d.clamped {
                warnings.push(format!("DeID raw value {:.6} clamped to 0", d.raw));
            }
            Some(d.value)
        }
        Err(e) => {
            warnings.push(format!("DeID not computed: {e}"));
            None
        }
    };
    let gvd = match gain_voice_distinctiveness(aa, &m.oo) {
        Ok(g) => {
            if g.degenerate {
                warnings.push(format!("G_VD degenerate ({})", g.gain_db));
            }
            Some(g.gain_db)
        }
        Err(e) => {
            warnings.push(format!("G_VD not computed: {e}"));
            None
        }
    };
    (deid, gvd)
}

fn wer_of(reference: Option<&TranscriptSet>, hypothesis: Option<&PathBuf>, warnings: &mut Vec<String>) -> Result<Option<f64>> {
    let (Some(reference), Some(h)) = (reference, hypothesis) else {
        return Ok(None);
    };
    let c = corpus_wer(reference, &TranscriptSet::load(h)?)?;
    if !c.missing.is_empty() {
        warnings.push(format!(
            "{}: {} reference utterances have no hypothesis",
            h.display(),
            c.missing.len()
        ));
    }
    Ok(Some(c.wer()))
}

fn row(
    condition: Condition,
    anonymizer: &str,
    enrollment: Enrollment,
    scores: &ScoreSet,
    extras: (Option<f64>, Option<f64>, Option<f64>),
    score_source: ScoreSource,
) -> Result<ReportRow> {
    Ok(ReportRow {
        condition,
        anonymizer: anonymizer.to_string(),
        enrollment,
        targets: scores.targets().len(),
        impostors: scores.impostors().len(),
        eer: eer(scores)?.eer,
        cllr: cllr(scores)?,
        cllr_min: cllr_min(scores)?,
        deid: extras.0,
        gvd_db: extras.1,
        wer: extras.2,
        score_source,
    })
}

fn execute(plan: &EvalPlan, staging: &Path) -> Result<Report> {
    let mut warnings = Vec::new();
    let inputs = load_inputs(plan).map_err(|e| e.in_stage("load"))?;
    info!(
        "{} enrollment, {} trial utterances, {} trials",
        inputs.enroll.len(),
        inputs.trial.len(),
        inputs.trials.len()
    );

    let original = featurize_both(
        (base_of(&plan.enroll_manifest), &inputs.enroll),
        (base_of(&plan.trial_manifest), &inputs.trial),
    )
    .map_err(|e| e.in_stage("featurize"))?;
    let silent = original.values().filter(|v| v.silent).count();
    if silent > 0 {
        warnings.push(format!("{silent} original utterances were silent"));
    }

    let (anon_enroll, anon_trial) =
        anonymize(plan, &inputs, &original, staging, &mut warnings).map_err(|e| e.in_stage("anonymize"))?;
    let views = Views {
        original,
        anon_enroll,
        anon_trial,
    };

    let cal = match plan.calibration {
        CalibrationChoice::Fixed(c) => c,
        CalibrationChoice::Fit => {
            let raw = score_trials(&views.original, &views.original, &inputs.trials, Calibration::IDENTITY)
                .map_err(|e| e.in_stage("calibrate"))?;
            calibrate(&raw).map_err(|e| e.in_stage("calibrate"))?
        }
    };
    info!("calibration slope {:.4} offset {:.4}", cal.slope, cal.offset);

    let anonymized = plan.anonymizer != Anonymizer::None;
    let mats = matrices(&inputs, &views, cal, anonymized, &mut warnings).map_err(|e| e.in_stage("similarity"))?;
    let (deid, gvd) = match &mats {
        Some(m) => deid_gvd(m, &mut warnings),
        None => (None, None),
    };

    let mut conditions = vec![Condition::UnprotectedOo];
    if plan.condition != Condition::UnprotectedOo {
        conditions.push(plan.condition);
    }
    let mut rows = Vec::new();
    let mut score_sets = Vec::new();
    for condition in conditions {
        let evaluated = condition == plan.condition;
        let (enroll_side, trial_side) = condition.sides();
        let hypothesis = if condition == Condition::UnprotectedOo && plan.condition != Condition::UnprotectedOo {
            plan.original_hypothesis.as_ref()
        } else {
            plan.hypothesis.as_ref()
        };
        let wer = wer_of(inputs.reference.as_ref(), hypothesis, &mut warnings).map_err(|e| e.in_stage("wer"))?;
        let extras = if condition == Condition::UnprotectedOo {
            let zero = mats.as_ref().map(|_| 0.0);
            (zero, zero, wer)
        } else {
            (deid, gvd, wer)
        };
        let anon_name = if condition == Condition::UnprotectedOo { "none" } else { plan.anonymizer.name() };

        let external = evaluated.then_some(plan.scores.as_ref()).flatten();
        let (per_utt, source) = match external {
            Some(path) => (
                ScoreSet::load(path, &plan.trials).map_err(|e| e.in_stage("score"))?,
                ScoreSource::External,
            ),
            None => (
                score_trials(views.enroll(enroll_side), views.trial(trial_side), &inputs.trials, cal)
                    .map_err(|e| e.in_stage("score"))?,
                ScoreSource::Scorer,
            ),
        };
        rows.push(
            row(condition, anon_name, Enrollment::Utterance, &per_utt, extras, source)
                .map_err(|e| e.in_stage("metrics"))?,
        );
        score_sets.push((format!("{}_utterance", condition.as_str()), per_utt));

        if source == ScoreSource::External {
            warnings.push(format!(
                "{}: speaker-averaged enrollment needs the scorer and is skipped for external scores",
                condition.as_str()
            ));
            continue;
        }
        let (models, spk_trials) =
            speaker_enrollment(&inputs, views.enroll(enroll_side)).map_err(|e| e.in_stage("score"))?;
        let per_spk =
            score_trials(&models, views.trial(trial_side), &spk_trials, cal).map_err(|e| e.in_stage("score"))?;
        rows.push(
            row(condition, anon_name, Enrollment::Speaker, &per_spk, extras, ScoreSource::Scorer)
                .map_err(|e| e.in_stage("metrics"))?,
        );
        score_sets.push((format!("{}_speaker", condition.as_str()), per_spk));
    }

    let mut inputs_used = vec![
        ("enroll_manifest".to_string(), plan.enroll_manifest.clone()),
        ("trial_manifest".to_string(), plan.trial_manifest.clone()),
        ("trials".to_string(), plan.trials.clone()),
        ("utt2spk".to_string(), plan.utt2spk.clone()),
    ];
    let optional = [
        ("scores", plan.scores.as_ref()),
        ("reference", plan.reference.as_ref()),
        ("hypothesis", plan.hypothesis.as_ref()),
        ("original_hypothesis", plan.original_hypothesis.as_ref()),
    ];
    inputs_used.extend(optional.iter().filter_map(|(k, p)| p.map(|p| (k.to_string(), p.clone()))));
    if let Anonymizer::Embed(s) = &plan.anonymizer {
        inputs_used.push(("pool_manifest".into(), s.pool_manifest.clone()));
    }
    for w in &warnings {
        warn!("{w}");
    }
    let mut matrices = Vec::new();
    if let Some(m) = mats {
        matrices.push((MatrixMode::Oo, m.oo));
        matrices.extend(m.oa.map(|x| (MatrixMode::Oa, x)));
        matrices.extend(m.aa.map(|x| (MatrixMode::Aa, x)));
    }
    Ok(Report {
        provenance: Provenance {
            config_hash: plan.config_hash.clone(),
            seed: plan.seed,
            tool_version: TOOL_VERSION.to_string(),
            calibration: cal,
            inputs: inputs_used,
        },
        rows,
        warnings,
        scores: score_sets,
        matrices,
    })
}

/// Runs every stage of `plan` and writes the report into `plan.output_dir`.
///
/// Outputs are assembled in a sibling staging directory and moved into
/// place only on success; a failed run leaves no partial output. An existing
/// output directory is replaced only if it holds a previous report.
pub fn run_plan(plan: &EvalPlan) -> Result<Report> {
    plan.validate()?;
    let out = &plan.output_dir;
    if out.exists() && !out.join("report.csv").exists() {
        return Err(Error::Plan(format!(
            "{} exists and does not hold a previous report; refusing to replace it",
            out.display()
        )));
    }
    let name = out
        .file_name()
        .ok_or_else(|| Error::Plan(format!("output_dir {} has no final component", out.display())))?;
    let parent = out.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let staging = parent.join(format!(".{}.partial", name.to_string_lossy()));
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    std::fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let result = pool.install(|| execute(plan, &staging)).and_then(|report| {
        report.write_to(&staging).map_err(|e| e.in_stage("report"))?;
        Ok(report)
    });
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            return Err(e);
        }
    };
    if out.exists() {
        std::fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
    }
    std::fs::rename(&staging, out).map_err(|e| Error::io(out, e))?;
    Ok(report)
}
