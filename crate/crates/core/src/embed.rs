//! Pseudo-speaker embeddings: replace a source vector by the mean of a random
//! subset of the pool vectors farthest from it.
//!
//! Randomness is keyed: the subset for a given source depends only on the
//! policy seed, an optional role salt (trial or enrollment side) and the
//! speaker or utterance id, so every utterance of a speaker maps to the same
//! pseudo-speaker while different speakers and roles draw independently.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::manifest::content_lines;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub speaker: String,
    pub vector: Vec<f64>,
}

/// Utterance-keyed embeddings of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    entries: BTreeMap<String, Embedding>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("embedding dimension must be >= 1".into()));
        }
        Ok(Self {
            dim,
            entries: BTreeMap::new(),
        })
    }

    pub fn insert(&mut self, utt: impl Into<String>, speaker: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("embedding has non-finite values".into()));
        }
        let utt = utt.into();
        if self.entries.contains_key(&utt) {
            return Err(Error::InvalidInput(format!("duplicate utterance {utt}")));
        }
        self.entries.insert(
            utt,
            Embedding {
                speaker: speaker.into(),
                vector,
            },
        );
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, utt: &str) -> Option<&Embedding> {
        self.entries.get(utt)
    }

    /// Entries in utterance-id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Embedding)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Utterance ids grouped by speaker.
    pub fn by_speaker(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut map: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (utt, e) in self.iter() {
            map.entry(e.speaker.as_str()).or_default().push(utt);
        }
        map
    }

    /// Parses `utt_id<SP>speaker_id<SP>v1,v2,...,vd` lines.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut set: Option<Self> = None;
        for (lineno, line) in content_lines(text) {
            let mut fields = line.split_whitespace();
            let (Some(utt), Some(spk), Some(values), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(Error::parse(origin, lineno, "expected `utt_id speaker_id v1,...,vd`"));
            };
            let vector = parse_csv_floats(values).map_err(|m| Error::parse(origin, lineno, m))?;
            let target = match &mut set {
                Some(s) => s,
                None => set.insert(Self::new(vector.len()).map_err(|e| Error::parse(origin, lineno, e.to_string()))?),
            };
            target
                .insert(utt, spk, vector)
                .map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
        }
        set.ok_or_else(|| Error::parse(origin, 0, "no embeddings"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (utt, e) in self.iter() {
            let values: Vec<String> = e.vector.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{utt} {} {}", e.speaker, values.join(","));
        }
        out
    }
}

fn parse_csv_floats(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad value `{v}`: {e}")))
        .collect()
}

/// Simplified two-covariance PLDA: speaker means drawn from `N(mean, between)`,
/// observations from `N(speaker, within)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel {
    mean: DVector<f64>,
    total_inv: DMatrix<f64>,
    joint_inv: DMatrix<f64>,
    /// `log|T| - log|Sigma| / 2` with `T = between + within`.
    log_det_term: f64,
}

impl PldaModel {
    pub fn new(mean: Vec<f64>, within: DMatrix<f64>, between: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if within.shape() != (d, d) || between.shape() != (d, d) {
            return Err(Error::InvalidInput(format!("PLDA covariances must be {d}x{d}")));
        }
        let total = &between + &within;
        let mut joint = DMatrix::zeros(2 * d, 2 * d);
        joint.view_mut((0, 0), (d, d)).copy_from(&total);
        joint.view_mut((d, d), (d, d)).copy_from(&total);
        joint.view_mut((0, d), (d, d)).copy_from(&between);
        joint.view_mut((d, 0), (d, d)).copy_from(&between);
        let not_pd = || Error::InvalidInput("PLDA covariance is not positive definite".into());
        let total_chol = total.cholesky().ok_or_else(not_pd)?;
        let joint_chol = joint.cholesky().ok_or_else(not_pd)?;
        let log_det = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_det_total = log_det(&total_chol.l());
        let log_det_joint = log_det(&joint_chol.l());
        Ok(Self {
            mean: DVector::from_vec(mean),
            total_inv: total_chol.inverse(),
            joint_inv: joint_chol.inverse(),
            log_det_term: log_det_total - 0.5 * log_det_joint,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Parses three lines, `mean v1,...,vd`, `within c11,c12,...` and
    /// `between c11,c12,...`, the matrices given row-major.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut fields: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for (lineno, line) in content_lines(text) {
            let (key, values) = line
                .trim()
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::parse(origin, lineno, "expected `key v1,v2,...`"))?;
            if !matches!(key, "mean" | "within" | "between") {
                return Err(Error::parse(origin, lineno, format!("unknown key `{key}`")));
            }
            let values = parse_csv_floats(values.trim()).map_err(|m| Error::parse(origin, lineno, m))?;
            fields.insert(key, values);
        }
        let within = fields
            .remove("within")
            .ok_or_else(|| Error::parse(origin, 0, "missing `within`"))?;
        let between = fields
            .remove("between")
            .ok_or_else(|| Error::parse(origin, 0, "missing `between`"))?;
        let d = (within.len() as f64).sqrt().round() as usize;
        if d * d != within.len() || between.len() != within.len() {
            return Err(Error::parse(origin, 0, "covariances must be square and of equal size"));
        }
        let mean = fields.remove("mean").unwrap_or_else(|| vec![0.0; d]);
        Self::new(
            mean,
            DMatrix::from_row_slice(d, d, &within),
            DMatrix::from_row_slice(d, d, &between),
        )
        .map_err(|e| Error::parse(origin, 0, e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Same-speaker versus different-speaker log-likelihood ratio.
    pub fn llr(&self, a: &[f64], b: &[f64]) -> f64 {
        let x = DVector::from_column_slice(a) - &self.mean;
        let y = DVector::from_column_slice(b) - &self.mean;
        let z = DVector::from_iterator(x.len() * 2, x.iter().chain(y.iter()).copied());
        -0.5 * z.dot(&(&self.joint_inv * &z))
            + 0.5 * x.dot(&(&self.total_inv * &x))
            + 0.5 * y.dot(&(&self.total_inv * &y))
            + self.log_det_term
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Distance {
    Cosine,
    /// Negative PLDA log-likelihood ratio.
    Plda(Arc<PldaModel>),
}

pub fn distance(a: &[f64], b: &[f64], kind: &Distance) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    match kind {
        Distance::Cosine => Ok(cosine_distance(a, b)),
        Distance::Plda(model) => {
            if model.dim() != a.len() {
                return Err(Error::DimensionMismatch {
                    expected: model.dim(),
                    got: a.len(),
                });
            }
            Ok(-model.llr(a, b))
        }
    }
}

/// `1 - cos(a, b)`, or 1 when either vector is zero.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        1.0
    } else {
        1.0 - dot / (na * nb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    PerSpeaker,
    PerUtterance,
}

/// Which side of a verification trial a set belongs to. Used to salt the RNG
/// so one speaker's trial and enrollment pseudo-speakers differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Trial,
    Enroll,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Trial => "trial",
            Role::Enroll => "enroll",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnonPolicy {
    /// Size of the farthest-vector candidate set.
    pub n_far: usize,
    /// How many candidates are averaged.
    pub n_avg: usize,
    pub distance: Distance,
    pub level: Level,
    pub seed: u64,
    pub role: Option<Role>,
}

impl Default for AnonPolicy {
    fn default() -> Self {
        Self {
            n_far: 200,
            n_avg: 100,
            distance: Distance::Cosine,
            level: Level::PerSpeaker,
            seed: 0,
            role: None,
        }
    }
}

impl AnonPolicy {
    pub fn validate(&self, pool_size: usize) -> Result<()> {
        if self.n_avg == 0 || self.n_avg > self.n_far {
            return Err(Error::InvalidInput(format!(
                "need 0 < n_avg ({}) <= n_far ({})",
                self.n_avg, self.n_far
            )));
        }
        if self.n_far > pool_size {
            return Err(Error::PoolTooSmall {
                needed: self.n_far,
                available: pool_size,
            });
        }
        Ok(())
    }

    pub fn rng_key(&self, key: &str) -> RngKey {
        RngKey {
            seed: self.seed,
            role: self.role,
            key: key.to_string(),
        }
    }
}

/// Everything that determines a pseudo-vector's random subset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngKey {
    pub seed: u64,
    pub role: Option<Role>,
    pub key: String,
}

impl RngKey {
    pub fn rng(&self) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(self.role.map_or("", Role::as_str).as_bytes());
        hasher.update([0u8]);
        hasher.update(self.key.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&hasher.finalize());
        ChaCha8Rng::from_seed(seed)
    }
}

/// Pseudo-vector under the policy's distance.
pub fn pseudo_vector(source: &[f64], pool: &EmbeddingSet, policy: &AnonPolicy, key: &str) -> Result<Vec<f64>> {
    if source.len() != pool.dim() {
        return Err(Error::DimensionMismatch {
            expected: pool.dim(),
            got: source.len(),
        });
    }
    // dimension is checked up front, so the closure cannot fail
    pseudo_vector_with(source, pool, policy, key, |a, b| {
        distance(a, b, &policy.distance).unwrap_or(f64::NAN)
    })
}

/// Pseudo-vector with an arbitrary distance function: rank the pool by
/// distance from `source` (descending, ties by utterance id), keep the top
/// `n_far`, draw `n_avg` of them without replacement and average.
pub fn pseudo_vector_with(
    source: &[f64],
    pool: &EmbeddingSet,
    policy: &AnonPolicy,
    key: &str,
    dist: impl Fn(&[f64], &[f64]) -> f64,
) -> Result<Vec<f64>> {
    policy.validate(pool.len())?;
    if source.len() != pool.dim() {
        return Err(Error::DimensionMismatch {
            expected: pool.dim(),
            got: source.len(),
        });
    }
    let vectors: Vec<&[f64]> = pool.iter().map(|(_, e)| e.vector.as_slice()).collect();
    let mut ranked: Vec<(f64, usize)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (dist(source, v), i))
        .collect();
    // stable sort keeps utterance-id order among ties
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    ranked.truncate(policy.n_far);

    let mut rng = policy.rng_key(key).rng();
    // sum in pool order so equal subsets give bit-identical means
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, policy.n_far, policy.n_avg)
        .into_iter()
        .map(|i| ranked[i].1)
        .collect();
    chosen.sort_unstable();
    let mut mean = vec![0.0; pool.dim()];
    for &i in &chosen {
        for (m, v) in mean.iter_mut().zip(vectors[i]) {
            *m += v;
        }
    }
    let n = policy.n_avg as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnonymizedSet {
    pub set: EmbeddingSet,
    /// Keys whose pseudo-vectors came out identical.
    pub warnings: Vec<String>,
}

/// Replaces every entry of `input` by its pseudo-vector. At speaker level the
/// source is the speaker's mean vector and the key is the speaker id.
pub fn anonymize_embedding_set(
    input: &EmbeddingSet,
    pool: &EmbeddingSet,
    policy: &AnonPolicy,
) -> Result<AnonymizedSet> {
    if input.dim() != pool.dim() {
        return Err(Error::DimensionMismatch {
            expected: pool.dim(),
            got: input.dim(),
        });
    }
    policy.validate(pool.len())?;

    // key -> (pseudo-vector, member utterances)
    let mut groups: Vec<(String, Vec<f64>, Vec<&str>)> = Vec::new();
    match policy.level {
        Level::PerSpeaker => {
            for (speaker, utts) in input.by_speaker() {
                let mut source = vec![0.0; input.dim()];
                for utt in &utts {
                    let v = &input.get(utt).expect("grouped from input").vector;
                    source.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                }
                source.iter_mut().for_each(|s| *s /= utts.len() as f64);
                let pseudo = pseudo_vector(&source, pool, policy, speaker)?;
                groups.push((speaker.to_string(), pseudo, utts));
            }
        }
        Level::PerUtterance => {
            for (utt, e) in input.iter() {
                let pseudo = pseudo_vector(&e.vector, pool, policy, utt)?;
                groups.push((utt.to_string(), pseudo, vec![utt]));
            }
        }
    }

    let mut warnings = Vec::new();
    for (i, (ka, va, _)) in groups.iter().enumerate() {
        for (kb, vb, _) in &groups[i + 1..] {
            if va == vb {
                let msg = format!("pseudo-vectors for `{ka}` and `{kb}` are identical");
                warn!("{msg}");
                warnings.push(msg);
            }
        }
    }

    let mut set = EmbeddingSet::new(input.dim())?;
    for (_, pseudo, utts) in groups {
        for utt in utts {
            let speaker = &input.get(utt).expect("grouped from input").speaker;
            set.insert(utt, speaker.clone(), pseudo.clone())?;
        }
    }
    Ok(AnonymizedSet { set, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn pool_1d(values: &[f64]) -> EmbeddingSet {
        let mut set = EmbeddingSet::new(1).unwrap();
        for (i, v) in values.iter().enumerate() {
            set.insert(format!("p{i:04}"), format!("s{i}"), vec![*v]).unwrap();
        }
        set
    }

    fn random_pool(n: usize, dim: usize, seed: u64) -> EmbeddingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = EmbeddingSet::new(dim).unwrap();
        for i in 0..n {
            let v = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            set.insert(format!("p{i:04}"), format!("ps{i}"), v).unwrap();
        }
        set
    }

    #[test]
    fn cosine_anchors() {
        let a = [1.0, 2.0, 3.0];
        assert!(cosine_distance(&a, &a).abs() < 1e-15);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert!((cosine_distance(&a, &[-1.0, -2.0, -3.0]) - 2.0).abs() < 1e-15);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), 1.0);
        assert!(distance(&[1.0], &[1.0, 2.0], &Distance::Cosine).is_err());
    }

    #[test]
    fn hand_ranked_absolute_difference() {
        let pool = pool_1d(&[10.0, -10.0, 0.0]);
        let policy = AnonPolicy {
            n_far: 2,
            n_avg: 2,
            ..AnonPolicy::default()
        };
        let v = pseudo_vector_with(&[9.0], &pool, &policy, "k", |a, b| (a[0] - b[0]).abs()).unwrap();
        assert_eq!(v, vec![-5.0]);
    }

    #[test]
    fn full_pool_average_ignores_seed() {
        let pool = random_pool(20, 4, 1);
        let expected: Vec<f64> = (0..4)
            .map(|d| pool.iter().map(|(_, e)| e.vector[d]).sum::<f64>() / 20.0)
            .collect();
        for seed in [0, 1, 99] {
            let policy = AnonPolicy {
                n_far: 20,
                n_avg: 20,
                seed,
                ..AnonPolicy::default()
            };
            let v = pseudo_vector(&[1.0, 0.0, 0.0, 0.0], &pool, &policy, "spk").unwrap();
            for (a, b) in v.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_policy_and_dims() {
        let pool = random_pool(5, 3, 2);
        let mut policy = AnonPolicy {
            n_far: 6,
            n_avg: 2,
            ..AnonPolicy::default()
        };
        assert!(matches!(
            pseudo_vector(&[0.0; 3], &pool, &policy, "k"),
            Err(Error::PoolTooSmall { needed: 6, available: 5 })
        ));
        policy.n_far = 3;
        policy.n_avg = 4;
        assert!(pseudo_vector(&[0.0; 3], &pool, &policy, "k").is_err());
        policy.n_avg = 2;
        assert!(matches!(
            pseudo_vector(&[0.0; 2], &pool, &policy, "k"),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn seed_changes_subset() {
        let pool = random_pool(1000, 8, 3);
        let source = vec![0.5; 8];
        let mk = |seed| AnonPolicy {
            seed,
            ..AnonPolicy::default()
        };
        let a = pseudo_vector(&source, &pool, &mk(1), "spk").unwrap();
        let b = pseudo_vector(&source, &pool, &mk(1), "spk").unwrap();
        let c = pseudo_vector(&source, &pool, &mk(2), "spk").unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn role_salt_changes_key() {
        let policy = AnonPolicy::default();
        let trial = AnonPolicy {
            role: Some(Role::Trial),
            ..policy.clone()
        };
        let enroll = AnonPolicy {
            role: Some(Role::Enroll),
            ..policy
        };
        assert_ne!(trial.rng_key("s1"), enroll.rng_key("s1"));
        let pool = random_pool(300, 4, 9);
        let a = pseudo_vector(&[1.0; 4], &pool, &trial, "s1").unwrap();
        let b = pseudo_vector(&[1.0; 4], &pool, &enroll, "s1").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn per_speaker_shares_vector() {
        let pool = random_pool(250, 4, 4);
        let mut input = EmbeddingSet::new(4).unwrap();
        input.insert("u1", "alice", vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        input.insert("u2", "alice", vec![0.9, 0.1, 0.0, 0.0]).unwrap();
        input.insert("u3", "bob", vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let out = anonymize_embedding_set(&input, &pool, &AnonPolicy::default()).unwrap();
        assert_eq!(out.set.get("u1").unwrap().vector, out.set.get("u2").unwrap().vector);
        assert_ne!(out.set.get("u1").unwrap().vector, out.set.get("u3").unwrap().vector);
        assert!(out.warnings.is_empty());
        assert_eq!(out.set.get("u3").unwrap().speaker, "bob");

        let per_utt = AnonPolicy {
            level: Level::PerUtterance,
            ..AnonPolicy::default()
        };
        let out = anonymize_embedding_set(&input, &pool, &per_utt).unwrap();
        assert_ne!(out.set.get("u1").unwrap().vector, out.set.get("u2").unwrap().vector);
    }

    #[test]
    fn collisions_are_reported() {
        // full-pool averaging makes every pseudo-vector the pool mean
        let pool = random_pool(10, 2, 5);
        let mut input = EmbeddingSet::new(2).unwrap();
        input.insert("u1", "a", vec![1.0, 0.0]).unwrap();
        input.insert("u2", "b", vec![0.0, 1.0]).unwrap();
        let policy = AnonPolicy {
            n_far: 10,
            n_avg: 10,
            ..AnonPolicy::default()
        };
        let out = anonymize_embedding_set(&input, &pool, &policy).unwrap();
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn embedding_file_round_trip() {
        let text = "u1 s1 0.5,-1,2e-3\nu2 s2 1,2,3\n";
        let set = EmbeddingSet::parse(text, "emb").unwrap();
        assert_eq!(set.dim(), 3);
        assert_eq!(set.get("u1").unwrap().vector, vec![0.5, -1.0, 0.002]);
        assert_eq!(EmbeddingSet::parse(&set.to_text(), "emb").unwrap(), set);
        assert!(EmbeddingSet::parse("u1 s1 1,2\nu2 s2 1\n", "emb").is_err());
        assert!(EmbeddingSet::parse("u1 s1 1,x\n", "emb").is_err());
    }

    #[test]
    fn plda_scalar_case_matches_closed_form() {
        let (b, w) = (2.0, 0.5);
        let model = PldaModel::new(vec![0.0], DMatrix::from_element(1, 1, w), DMatrix::from_element(1, 1, b)).unwrap();
        // bivariate normal with variance b+w and covariance b, against two
        // independent normals
        let log_n2 = |x: f64, y: f64| {
            let (s, c) = (b + w, b);
            let det = s * s - c * c;
            let q = (s * x * x - 2.0 * c * x * y + s * y * y) / det;
            -0.5 * q - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln()
        };
        let log_n1 = |x: f64| -0.5 * x * x / (b + w) - 0.5 * ((b + w) * 2.0 * std::f64::consts::PI).ln();
        for (x, y) in [(0.3, 0.4), (1.0, -1.0), (2.0, 2.5)] {
            let expected = log_n2(x, y) - log_n1(x) - log_n1(y);
            assert!((model.llr(&[x], &[y]) - expected).abs() < 1e-12);
            assert!((model.llr(&[x], &[y]) - model.llr(&[y], &[x])).abs() < 1e-12);
        }
        let d = Distance::Plda(Arc::new(model));
        assert!(distance(&[1.0], &[1.1], &d).unwrap() < distance(&[1.0], &[-1.0], &d).unwrap());
    }

    #[test]
    fn plda_file_parse() {
        let model = PldaModel::parse("mean 0,0\nwithin 1,0,0,1\nbetween 2,0.5,0.5,2\n", "plda").unwrap();
        assert_eq!(model.dim(), 2);
        assert!(PldaModel::parse("within 1,0,0,1\n", "plda").is_err());
        assert!(PldaModel::parse("within 1,0,0\nbetween 1,0,0\n", "plda").is_err());
        assert!(PldaModel::parse("within -1,0,0,1\nbetween 1,0,0,1\n", "plda").is_err());
    }

    proptest! {
        #[test]
        fn result_within_pool_bounds(seed in any::<u64>(), n_far in 1usize..40, frac in 0.01f64..1.0) {
            let pool = random_pool(40, 3, 7);
            let n_avg = ((n_far as f64 * frac).ceil() as usize).clamp(1, n_far);
            let policy = AnonPolicy { n_far, n_avg, seed, ..AnonPolicy::default() };
            let v = pseudo_vector(&[0.1, 0.2, 0.3], &pool, &policy, "k").unwrap();
            for d in 0..3 {
                let lo = pool.iter().map(|(_, e)| e.vector[d]).fold(f64::INFINITY, f64::min);
                let hi = pool.iter().map(|(_, e)| e.vector[d]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v[d] >= lo - 1e-12 && v[d] <= hi + 1e-12);
            }
        }
    }
}
