//! Speaker anonymization and evaluation toolkit.
//!
//! - [`mcadams`]: LPC pole-shifting anonymization of waveforms
//! - [`embed`]: pseudo-speaker embeddings from a pool of far vectors
//! - [`privacy`]: EER, Cllr, Cllr_min, similarity matrices, DeID, G_VD
//! - [`utility`]: WER and speaker-clustering purity and F1
//! - [`scorer`]: a training-free utterance scorer producing LLR-like scores
//! - [`harness`]: plan-driven evaluation under the attack conditions
//! - [`corpus`]: a synthetic multi-speaker corpus generator

pub mod audio;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod harness;
pub mod lpc;
pub mod manifest;
pub mod mcadams;
pub mod privacy;
pub mod scorer;
pub mod synth;
pub mod utility;

pub use audio::{read_wav, write_wav, AudioBuffer, FrameConfig, Window};
pub use corpus::{gen_corpus, CorpusSpec};
pub use embed::{anonymize_embedding_set, pseudo_vector, AnonPolicy, Distance, EmbeddingSet, Level, Role};
pub use error::{Error, Result};
pub use harness::{run_plan, Condition, EvalPlan, Report};
pub use lpc::{lpc_analyze, lpc_from_poles, roots_of_lpc, LpcFrame, PoleSet};
pub use manifest::{Manifest, SpeakerMap};
pub use mcadams::{anonymize_directory, anonymize_mcadams, McAdamsConfig};
pub use privacy::{
    cllr, cllr_min, de_identification, diag_dominance, eer, gain_voice_distinctiveness, similarity_matrix,
    MatrixMode, ScoreSet, SimilarityMatrix,
};
pub use scorer::{calibrate, featurize, score, Calibration, UttVector};
pub use utility::{clustering_f1, clustering_purity, corpus_wer, wer, ClusteringTrial, Transcript};
