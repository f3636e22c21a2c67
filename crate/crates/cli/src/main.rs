use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use vpkit_core::corpus::CorpusSpec;
use vpkit_core::embed::PldaModel;
use vpkit_core::harness::{default_jobs, parse_calibration};
use vpkit_core::manifest::ManifestEntry;
use vpkit_core::mcadams::anonymize_file;
use vpkit_core::privacy::{load_trial_list, parse_score_file};
use vpkit_core::scorer::{featurize_manifest, score_trials};
use vpkit_core::utility::{load_clustering_trials, TranscriptSet};
use vpkit_core::{
    anonymize_directory, anonymize_embedding_set, calibrate, cllr, cllr_min, clustering_f1, clustering_purity,
    corpus_wer, de_identification, eer, gain_voice_distinctiveness, gen_corpus, run_plan, similarity_matrix,
    AnonPolicy, Calibration, Distance, EmbeddingSet, EvalPlan, Manifest, MatrixMode, McAdamsConfig, ScoreSet,
    SimilarityMatrix, SpeakerMap,
};

mod heatmap;

#[derive(Parser)]
#[command(name = "vpkit", version, about = "Voice anonymization and privacy/utility evaluation")]
struct Cli {
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true, env = "VPKIT_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Anonymize audio or speaker embeddings.
    #[command(subcommand)]
    Anonymize(Anonymize),
    /// Score verification trials with the built-in scorer.
    #[command(subcommand)]
    Score(Score),
    /// Compute privacy and utility metrics from files.
    #[command(subcommand)]
    Metrics(Metrics),
    /// Run an evaluation plan.
    Run {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Write a synthetic multi-speaker corpus with trial lists and a plan.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        speakers: usize,
        #[arg(long, default_value_t = 4)]
        utterances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Extra speakers written as an external embedding pool.
        #[arg(long, default_value_t = 0)]
        pool_speakers: usize,
    },
}

#[derive(Subcommand)]
enum Anonymize {
    /// LPC pole shifting of a WAV file or a directory of WAV files.
    Mcadams {
        #[arg(long, default_value_t = 0.8)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        radius_scale: f64,
        #[arg(long, default_value_t = 20)]
        order: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `utt_id<TAB>relative_path` lines; without it every .wav under --in is processed.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Replace embeddings by pseudo-speaker vectors drawn from a pool.
    Embed {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        n_star: usize,
        #[arg(long, value_enum, default_value_t = LevelArg::PerSpeaker)]
        level: LevelArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        role: Option<RoleArg>,
        /// PLDA model file; selects PLDA distance instead of cosine.
        #[arg(long)]
        plda: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    PerSpeaker,
    PerUtterance,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Trial,
    Enroll,
}

#[derive(Subcommand)]
enum Score {
    /// Score `enroll trial label` pairs into an `enroll trial score` file.
    Pairs {
        #[arg(long)]
        audio_dir: PathBuf,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Manifest for --audio-dir; without it utterance ids are file stems.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Fixed `slope,offset` calibration.
        #[arg(long, conflicts_with = "calibrate")]
        cal: Option<String>,
        /// Fit the calibration on the labelled trials themselves.
        #[arg(long)]
        calibrate: bool,
    },
}

#[derive(Args)]
struct KeyedScores {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    key: PathBuf,
}

impl KeyedScores {
    fn load(&self) -> Result<ScoreSet> {
        Ok(ScoreSet::load(&self.scores, &self.key)?)
    }
}

#[derive(Subcommand)]
enum Metrics {
    Eer(KeyedScores),
    Cllr(KeyedScores),
    Cllrmin(KeyedScores),
    /// Speaker similarity matrix from segment-pair scores.
    Simmatrix {
        /// `seg_a seg_b llr` lines; for `oa` the first id is the original segment.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        utt2spk: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// CSV output; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
    Deid {
        #[arg(long)]
        oa: PathBuf,
        #[arg(long)]
        oo: PathBuf,
    },
    Gvd {
        #[arg(long)]
        aa: PathBuf,
        #[arg(long)]
        oo: PathBuf,
    },
    Wer {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
    },
    Purity {
        #[arg(long)]
        trials: PathBuf,
    },
    F1 {
        #[arg(long)]
        trials: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Oo,
    Oa,
    Aa,
}

impl From<ModeArg> for MatrixMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Oo => MatrixMode::Oo,
            ModeArg::Oa => MatrixMode::Oa,
            ModeArg::Aa => MatrixMode::Aa,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let jobs = cli.jobs.unwrap_or_else(default_jobs);
    if jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
        warn!("thread pool: {e}");
    }
    match dispatch(cli.command, jobs) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command, jobs: usize) -> Result<ExitCode> {
    match command {
        Command::Anonymize(Anonymize::Mcadams {
            alpha,
            radius_scale,
            order,
            input,
            out,
            manifest,
        }) => {
            let cfg = McAdamsConfig {
                alpha,
                radius_scale,
                lpc_order: order,
                ..McAdamsConfig::default()
            };
            mcadams(&cfg, &input, &out, manifest.as_deref(), jobs)
        }
        Command::Anonymize(Anonymize::Embed {
            pool,
            input,
            out,
            n,
            n_star,
            level,
            seed,
            role,
            plda,
        }) => {
            let distance = match plda {
                Some(p) => Distance::Plda(Arc::new(PldaModel::load(&p)?)),
                None => Distance::Cosine,
            };
            let policy = AnonPolicy {
                n_far: n,
                n_avg: n_star,
                distance,
                level: match level {
                    LevelArg::PerSpeaker => vpkit_core::Level::PerSpeaker,
                    LevelArg::PerUtterance => vpkit_core::Level::PerUtterance,
                },
                seed,
                role: role.map(|r| match r {
                    RoleArg::Trial => vpkit_core::Role::Trial,
                    RoleArg::Enroll => vpkit_core::Role::Enroll,
                }),
            };
            let pool = EmbeddingSet::load(&pool)?;
            let input = EmbeddingSet::load(&input)?;
            let anon = anonymize_embedding_set(&input, &pool, &policy)?;
            for w in &anon.warnings {
                warn!("{w}");
            }
            write(&out, &anon.set.to_text())?;
            info!("wrote {} pseudo-embeddings to {}", anon.set.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Score(Score::Pairs {
            audio_dir,
            trials,
            out,
            manifest,
            cal,
            calibrate: fit,
        }) => {
            let manifest = match manifest {
                Some(m) => Manifest::load(&m)?,
                None => scan_wavs(&audio_dir)?,
            };
            let trials = load_trial_list(&trials)?;
            let vectors = featurize_manifest(&audio_dir, &manifest)?;
            let cal = match cal {
                Some(c) => parse_calibration(&c)?,
                None => Calibration::IDENTITY,
            };
            let mut scores = score_trials(&vectors, &vectors, &trials, cal)?;
            if fit {
                let fitted = calibrate(&scores)?;
                info!("fitted calibration slope {} offset {}", fitted.slope, fitted.offset);
                scores = score_trials(&vectors, &vectors, &trials, fitted)?;
            }
            write(&out, &scores.to_score_text())?;
            info!("scored {} trials into {}", scores.trials.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Metrics(m) => metrics(m),
        Command::Run { plan } => {
            let mut plan = EvalPlan::load(&plan)?;
            plan.jobs = jobs;
            let report = run_plan(&plan)?;
            for w in &report.warnings {
                warn!("{w}");
            }
            print!("{}", report.to_text());
            info!("report written to {}", plan.output_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::GenCorpus {
            out,
            speakers,
            utterances,
            seed,
            pool_speakers,
        } => {
            let spec = CorpusSpec {
                pool_speakers,
                ..CorpusSpec::new(speakers, utterances, seed)
            };
            let s = gen_corpus(&spec, &out)?;
            println!(
                "{} speakers, {} enrollment and {} trial utterances, {} target and {} nontarget trials, {} pool files",
                s.speakers, s.enroll, s.trial, s.target_trials, s.nontarget_trials, s.pool_files
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn mcadams(cfg: &McAdamsConfig, input: &Path, out: &Path, manifest: Option<&Path>, jobs: usize) -> Result<ExitCode> {
    if input.is_file() {
        let stats = anonymize_file(input, out, cfg)?;
        info!(
            "{} frames, {} flagged, {} poles clamped",
            stats.frames, stats.frames_flagged, stats.poles_clamped
        );
        return Ok(ExitCode::SUCCESS);
    }
    let manifest = match manifest {
        Some(m) => Manifest::load(m)?,
        None => scan_wavs(input)?,
    };
    let report = anonymize_directory(input, out, cfg, &manifest, jobs)?;
    let failed = report.failures().count();
    for f in report.failures() {
        if let vpkit_core::mcadams::FileOutcome::Failed { error } = &f.outcome {
            eprintln!("failed {}: {error}", f.utt_id);
        }
    }
    println!("{} of {} files anonymized", report.files.len() - failed, report.files.len());
    Ok(if failed > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

/// Every `.wav` under `dir`, keyed by file stem.
fn scan_wavs(dir: &Path) -> Result<Manifest> {
    let mut entries = Vec::new();
    let mut seen = HashMap::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.with_context(|| format!("scanning {}", dir.display()))?;
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().is_none_or(|e| !e.eq_ignore_ascii_case("wav")) {
            continue;
        }
        let rel = path.strip_prefix(dir).expect("walkdir yields paths under its root").to_path_buf();
        let utt = path.file_stem().expect("has an extension").to_string_lossy().into_owned();
        if let Some(prev) = seen.insert(utt.clone(), rel.clone()) {
            bail!(
                "utterance id {utt} is used by both {} and {}; pass --manifest",
                prev.display(),
                rel.display()
            );
        }
        entries.push(ManifestEntry { utt_id: utt, path: rel });
    }
    if entries.is_empty() {
        bail!("no .wav files under {}", dir.display());
    }
    Ok(Manifest { entries })
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn metrics(m: Metrics) -> Result<ExitCode> {
    match m {
        Metrics::Eer(k) => {
            let e = eer(&k.load()?)?;
            println!("eer {:.6}\nthreshold {}", e.eer, e.threshold);
        }
        Metrics::Cllr(k) => println!("cllr {:.6}", cllr(&k.load()?)?),
        Metrics::Cllrmin(k) => println!("cllr_min {:.6}", cllr_min(&k.load()?)?),
        Metrics::Simmatrix {
            scores,
            utt2spk,
            mode,
            out,
            heatmap: png,
        } => {
            let m = simmatrix(&scores, &utt2spk, mode.into())?;
            match out {
                Some(p) => write(&p, &m.to_csv())?,
                None => print!("{}", m.to_csv()),
            }
            if let Some(p) = png {
                heatmap::write_png(&m, &p)?;
            }
        }
        Metrics::Deid { oa, oo } => {
            let d = de_identification(&SimilarityMatrix::load(&oa)?, &SimilarityMatrix::load(&oo)?)?;
            if d.clamped {
                warn!("raw DeID {} clamped to 0", d.raw);
            }
            println!("deid {:.6}", d.value);
        }
        Metrics::Gvd { aa, oo } => {
            let g = gain_voice_distinctiveness(&SimilarityMatrix::load(&aa)?, &SimilarityMatrix::load(&oo)?)?;
            if g.degenerate {
                warn!("a matrix has zero diagonal dominance");
            }
            println!("gvd_db {:.6}", g.gain_db);
        }
        Metrics::Wer { reference, hyp } => {
            let w = corpus_wer(&TranscriptSet::load(&reference)?, &TranscriptSet::load(&hyp)?)?;
            let c = w.counts;
            println!(
                "wer {:.6}\nsubstitutions {}\ndeletions {}\ninsertions {}\nref_words {}",
                w.wer(),
                c.substitutions,
                c.deletions,
                c.insertions,
                c.ref_words
            );
            if !w.missing.is_empty() {
                warn!("{} utterances had no hypothesis and count as deletions", w.missing.len());
            }
        }
        Metrics::Purity { trials } => {
            let trials = load_clustering_trials(&trials)?;
            let mut total = 0.0;
            for (i, t) in trials.iter().enumerate() {
                let p = clustering_purity(t);
                let assignment: Vec<&str> = p.assignment.iter().map(|a| a.as_deref().unwrap_or("-")).collect();
                println!(
                    "trial {i} purity {:.6} assignment {}{}",
                    p.purity,
                    assignment.join(","),
                    if p.distractor_assigned { " (distractor assigned)" } else { "" }
                );
                total += p.purity;
            }
            println!("mean_purity {:.6}", total / trials.len() as f64);
        }
        Metrics::F1 { trials } => {
            let trials = load_clustering_trials(&trials)?;
            let scores: Vec<f64> = trials.iter().map(clustering_f1).collect();
            for (i, f) in scores.iter().enumerate() {
                println!("trial {i} f1 {f:.6}");
            }
            println!("mean_f1 {:.6}", scores.iter().sum::<f64>() / scores.len() as f64);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn simmatrix(scores: &Path, utt2spk: &Path, mode: MatrixMode) -> Result<SimilarityMatrix> {
    let text = std::fs::read_to_string(scores).with_context(|| format!("reading {}", scores.display()))?;
    let pairs: HashMap<(String, String), f64> = parse_score_file(&text, &scores.display().to_string())?
        .into_iter()
        .map(|(a, b, s)| ((a, b), s))
        .collect();
    let mut segments: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (utt, spk) in SpeakerMap::load(utt2spk)?.0 {
        segments.entry(spk).or_default().push(utt);
    }
    let symmetric = !matches!(mode, MatrixMode::Oa);
    let missing = Mutex::new(Vec::new());
    let m = similarity_matrix(&segments, mode, |a, _, b, _| {
        let key = (a.to_string(), b.to_string());
        let found = pairs
            .get(&key)
            .or_else(|| symmetric.then(|| pairs.get(&(key.1.clone(), key.0.clone()))).flatten());
        found.copied().unwrap_or_else(|| {
            missing.lock().expect("not poisoned").push(key);
            f64::NAN
        })
    })?;
    let missing = missing.into_inner().expect("not poisoned");
    if let Some((a, b)) = missing.first() {
        bail!("{} segment pairs have no score, e.g. {a} {b}", missing.len());
    }
    Ok(m)
}
