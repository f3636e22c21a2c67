//! Acceptance suite. Each test prints one `PASS` or `FAIL` line; run with
//! `cargo test -p vpkit-core --test acceptance -- --nocapture --test-threads=1`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use common::{smoothed_spectrum, snr_db, two_peaks, warped_hz};
use vpkit_core::harness::Enrollment;
use vpkit_core::mcadams::transform_poles_unclamped;
use vpkit_core::privacy::{optimal_llrs, sigmoid};
use vpkit_core::synth::{steady_vowel, Formant};
use vpkit_core::utility::{align, parse_clustering_trials, TranscriptSet};
use vpkit_core::{
    anonymize_embedding_set, anonymize_mcadams, cllr, cllr_min, clustering_f1, clustering_purity, corpus_wer,
    de_identification, diag_dominance, eer, gain_voice_distinctiveness, gen_corpus, lpc_analyze, read_wav,
    roots_of_lpc, run_plan, similarity_matrix, wer, AnonPolicy, Condition, CorpusSpec, EmbeddingSet, EvalPlan,
    Level, Manifest, MatrixMode, McAdamsConfig, PoleSet, Role, ScoreSet, SimilarityMatrix, Transcript,
};

fn verdict(id: &str, name: &str, ok: bool, detail: impl std::fmt::Display) {
    println!("{} {id} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{id} {name}: {detail}");
}

#[test]
fn ac01_mcadams_identity_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    gen_corpus(&CorpusSpec::new(5, 2, 11), dir.path()).unwrap();
    let mut audio = Vec::new();
    for scp in ["enroll.scp", "trial.scp"] {
        for e in Manifest::load(dir.path().join(scp)).unwrap().entries {
            audio.push(read_wav(dir.path().join(e.path)).unwrap());
        }
    }
    assert_eq!(audio.len(), 10);
    let cfg = McAdamsConfig {
        alpha: 1.0,
        radius_scale: 1.0,
        ..McAdamsConfig::default()
    };
    let edge = cfg.frame.frame_len;
    let start = Instant::now();
    let outputs: Vec<_> = audio.iter().map(|a| anonymize_mcadams(a, &cfg).unwrap()).collect();
    let elapsed = start.elapsed().as_secs_f64();
    let worst = audio
        .iter()
        .zip(&outputs)
        .map(|(a, o)| {
            let n = a.len();
            snr_db(&a.samples()[edge..n - edge], &o.audio.samples()[edge..n - edge])
        })
        .fold(f64::INFINITY, f64::min);
    verdict(
        "ac01",
        "McAdams identity",
        worst >= 40.0 && elapsed < 5.0,
        format!("worst interior SNR {worst:.1} dB over 10 utterances in {elapsed:.2} s"),
    );
}

#[test]
fn ac02_mcadams_contraction_direction() {
    let sr = 16_000.0;
    let fixed_point = sr / (2.0 * PI);
    let cfg = McAdamsConfig::default();
    let mut details = Vec::new();
    let mut ok = true;
    for formants in [[700.0, 1200.0], [500.0, 3600.0]] {
        let vowel = steady_vowel(
            &[Formant::new(formants[0], 80.0), Formant::new(formants[1], 100.0)],
            120.0,
            1.0,
            16_000,
        )
        .unwrap();
        let a = anonymize_mcadams(&vowel, &cfg).unwrap();
        let b = anonymize_mcadams(&vowel, &cfg).unwrap();
        ok &= a.audio == b.audio;
        let before = two_peaks(&smoothed_spectrum(vowel.samples(), sr, 120.0), 250.0, 4500.0);
        let after = two_peaks(&smoothed_spectrum(a.audio.samples(), sr, 120.0), 250.0, 4500.0);
        for (f0, f1, nominal) in [(before.0, after.0, formants[0]), (before.1, after.1, formants[1])] {
            let closer = (f1 - fixed_point).abs() < (f0 - fixed_point).abs();
            let predicted = warped_hz(nominal, cfg.alpha, sr);
            ok &= closer && (f1 - predicted).abs() < 120.0;
            details.push(format!("{f0:.0}->{f1:.0} Hz (predicted {predicted:.0})"));
        }
    }
    verdict(
        "ac02",
        "McAdams contraction toward 2.5 kHz",
        ok,
        format!("fixed point {fixed_point:.0} Hz; {}; repeat runs identical", details.join(", ")),
    );
}

#[test]
fn ac03_radius_contraction_configuration() {
    let cfg = McAdamsConfig::with_radius_contraction();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sets = Vec::new();
    let vowel = steady_vowel(&[Formant::new(600.0, 80.0), Formant::new(1700.0, 100.0)], 140.0, 0.2, 16_000).unwrap();
    for frame in vowel.samples().chunks_exact(320).take(8) {
        sets.push(roots_of_lpc(&lpc_analyze(frame, 20).unwrap().coeffs).unwrap());
    }
    for _ in 0..200 {
        let pairs = (0..rng.random_range(0..10))
            .map(|_| Complex64::from_polar(rng.random_range(0.01..0.999), rng.random_range(0.001..PI - 0.001)))
            .collect();
        let real = (0..rng.random_range(0..3)).map(|_| rng.random_range(-0.999..0.999)).collect();
        sets.push(PoleSet::new(real, pairs));
    }
    let mut worst = 0.0f64;
    let mut angle_worst = 0.0f64;
    for set in &sets {
        let out = transform_poles_unclamped(set, &cfg);
        for (p, q) in set.pairs().iter().zip(out.pairs()) {
            worst = worst.max((q.norm() - 0.975 * p.norm()).abs());
            angle_worst = angle_worst.max((q.arg() - p.arg().powf(0.8)).abs());
        }
        for (p, q) in set.real().iter().zip(out.real()) {
            worst = worst.max((q.abs() - 0.975 * p.abs()).abs());
        }
    }
    let ok = cfg.radius_scale == 0.975 && cfg.alpha == 0.8 && worst <= 1e-12 && angle_worst <= 1e-12;
    verdict(
        "ac03",
        "radius 0.975 with alpha 0.8",
        ok,
        format!("{} pole sets, max radius error {worst:.2e}, max angle error {angle_worst:.2e}", sets.len()),
    );
}

/// Every distinct score as a threshold plus one past the maximum; EER where
/// the miss and false-alarm curves cross, interpolated along the segment.
fn brute_force_eer(tar: &[f64], non: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = tar.iter().chain(non).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut curve: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let fa = non.iter().filter(|&&s| s >= t).count() as f64 / non.len() as f64;
            let miss = tar.iter().filter(|&&s| s < t).count() as f64 / tar.len() as f64;
            (fa, miss)
        })
        .collect();
    curve.push((0.0, 1.0));
    for i in 0..curve.len() {
        let (fa, miss) = curve[i];
        if miss == fa || (i == 0 && miss > fa) {
            return fa;
        }
        if miss > fa {
            let (fa0, miss0) = curve[i - 1];
            let (d0, d1) = (miss0 - fa0, miss - fa);
            let w = d0 / (d0 - d1);
            return fa0 + w * (fa - fa0);
        }
    }
    unreachable!("the final point always crosses")
}

#[test]
fn ac04_eer_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let total = rng.random_range(2..=2000);
        let nt = rng.random_range(1..total);
        let integer = i % 3 == 0;
        let mut draw = |shift: f64| {
            let x: f64 = Normal::new(shift, 1.0).unwrap().sample(&mut rng);
            if integer { (x * 2.0).round() } else { x }
        };
        let tar: Vec<f64> = (0..nt).map(|_| draw(rng_shift(i))).collect();
        let non: Vec<f64> = (0..total - nt).map(|_| draw(0.0)).collect();
        let got = eer(&ScoreSet::from_scores(&tar, &non)).unwrap().eer;
        worst = worst.max((got - brute_force_eer(&tar, &non)).abs());
    }
    let normal = |mu: f64, n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        Normal::new(mu, 1.0).unwrap().sample_iter(rng).take(n).collect()
    };
    let tar = normal(1.0, 5000, &mut rng);
    let non = normal(-1.0, 5000, &mut rng);
    let gaussian = eer(&ScoreSet::from_scores(&tar, &non)).unwrap().eer;
    verdict(
        "ac04",
        "EER oracle equivalence",
        worst <= 1e-9 && (gaussian - 0.1587).abs() <= 0.02,
        format!("200 sets, max deviation {worst:.2e}; Gaussian EER {gaussian:.4}"),
    );
}

fn rng_shift(i: usize) -> f64 {
    [-1.0, 0.0, 0.5, 1.5, 3.0][i % 5]
}

#[test]
fn ac05_cllr_anchors() {
    let zero = cllr(&ScoreSet::from_scores(&[0.0; 17], &[0.0; 40])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    for _ in 0..1000 {
        let nt = rng.random_range(1..60);
        let nn = rng.random_range(1..60);
        let shift = rng.random_range(-3.0..3.0);
        let scale = rng.random_range(0.1..5.0);
        let tar: Vec<f64> = (0..nt).map(|_| scale * (rng.random::<f64>() - 0.5) + shift).collect();
        let non: Vec<f64> = (0..nn).map(|_| scale * (rng.random::<f64>() - 0.5)).collect();
        let s = ScoreSet::from_scores(&tar, &non);
        if cllr_min(&s).unwrap() > cllr(&s).unwrap() {
            violations += 1;
        }
    }
    let mut shuffled = Vec::new();
    for _ in 0..10 {
        let mut scores: Vec<f64> = (0..2000).map(|_| rng.random_range(-4.0..4.0)).collect();
        scores.shuffle(&mut rng);
        let (tar, non) = scores.split_at(1000);
        shuffled.push(cllr_min(&ScoreSet::from_scores(tar, non)).unwrap());
    }
    let far = shuffled.iter().map(|c| (c - 1.0).abs()).fold(0.0, f64::max);
    // PAV output is monotone in the score
    let cal = optimal_llrs(&ScoreSet::from_scores(&[0.3, 1.0, 2.0, -1.0], &[0.0, 0.5, -2.0, 1.5])).unwrap();
    let monotone = cal.windows(2).all(|w| w[0].0 <= w[1].0);
    verdict(
        "ac05",
        "Cllr anchors",
        zero == 1.0 && violations == 0 && far <= 0.05 && monotone,
        format!("all-zero {zero}; cllr_min > cllr in {violations}/1000; shuffled max |cllr_min - 1| {far:.4}"),
    );
}

fn matrix(n: usize, diag: f64, off: f64) -> SimilarityMatrix {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = diag;
        for j in i + 1..n {
            v[i * n + j] = off;
            v[j * n + i] = off;
        }
    }
    SimilarityMatrix::new((0..n).map(|i| format!("s{i}")).collect(), v).unwrap()
}

#[test]
fn ac06_matrix_metric_anchors() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut segments = BTreeMap::new();
    for s in 0..6 {
        segments.insert(format!("spk{s}"), (0..3).map(|u| format!("spk{s}-{u}")).collect::<Vec<_>>());
    }
    let offsets: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
    let idx = |seg: &str| {
        let (s, u) = seg[3..].split_once('-').unwrap();
        s.parse::<usize>().unwrap() * 3 + u.parse::<usize>().unwrap()
    };
    let llr = |a: &str, _, b: &str, _| {
        let same = a[..4] == b[..4];
        (if same { 3.0 } else { -2.0 }) + offsets[idx(a)] * offsets[idx(b)]
    };
    let m_oo = similarity_matrix(&segments, MatrixMode::Oo, llr).unwrap();
    let symmetric = (0..6).all(|i| (0..6).all(|j| m_oo.get(i, j) == m_oo.get(j, i)));
    let in_range = m_oo.values().iter().all(|v| *v > 0.0 && *v < 1.0);

    let deid_same = de_identification(&m_oo, &m_oo).unwrap().value;
    let flat = SimilarityMatrix::new(m_oo.speakers().to_vec(), vec![sigmoid(0.25); 36]).unwrap();
    let deid_flat = de_identification(&flat, &m_oo).unwrap().value;
    let gvd_same = gain_voice_distinctiveness(&m_oo, &m_oo).unwrap().gain_db;

    let base = matrix(5, 0.7, 0.4);
    let doubled = matrix(5, 0.8, 0.2);
    let ratio = diag_dominance(&doubled).unwrap() / diag_dominance(&base).unwrap();
    let gvd_double = gain_voice_distinctiveness(&doubled, &base).unwrap().gain_db;
    let ok = symmetric
        && in_range
        && deid_same == 0.0
        && deid_flat == 1.0
        && gvd_same == 0.0
        && (ratio - 2.0).abs() < 1e-12
        && (gvd_double - 3.0103).abs() <= 1e-4
        && (gvd_double - 10.0 * 2f64.log10()).abs() <= 1e-6;
    verdict(
        "ac06",
        "matrix metric anchors",
        ok,
        format!(
            "DeID(m_oo, m_oo) {deid_same}, DeID(flat) {deid_flat}, G_VD(m_oo, m_oo) {gvd_same} dB, doubled dominance {gvd_double:.6} dB"
        ),
    );
}

#[test]
fn ac07_same_pseudo_speaker_per_speaker() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dim = 16;
    let mut gaussian = |mu: f64| -> Vec<f64> { (0..dim).map(|_| mu + rng.random_range(-1.0..1.0)).collect() };
    let mut pool = EmbeddingSet::new(dim).unwrap();
    for i in 0..300 {
        pool.insert(format!("p{i:03}"), format!("pool{}", i / 2), gaussian(0.0)).unwrap();
    }
    let mut input = EmbeddingSet::new(dim).unwrap();
    for s in 0..6 {
        for u in 0..4 {
            input.insert(format!("s{s}-u{u}"), format!("s{s}"), gaussian(s as f64 * 0.3)).unwrap();
        }
    }
    let policy = |role| AnonPolicy {
        level: Level::PerSpeaker,
        seed: 42,
        role: Some(role),
        ..AnonPolicy::default()
    };
    let trial = anonymize_embedding_set(&input, &pool, &policy(Role::Trial)).unwrap();
    let again = anonymize_embedding_set(&input, &pool, &policy(Role::Trial)).unwrap();
    let enroll = anonymize_embedding_set(&input, &pool, &policy(Role::Enroll)).unwrap();

    let by_speaker = input.by_speaker();
    let one_vector = by_speaker.values().all(|utts| {
        let first = &trial.set.get(utts[0]).unwrap().vector;
        utts.iter().all(|u| &trial.set.get(u).unwrap().vector == first)
    });
    let keys: std::collections::HashSet<_> = by_speaker.keys().map(|s| policy(Role::Trial).rng_key(s)).collect();
    let vectors: BTreeSet<Vec<u64>> = by_speaker
        .values()
        .map(|utts| trial.set.get(utts[0]).unwrap().vector.iter().map(|x| x.to_bits()).collect())
        .collect();
    let deterministic = trial.set == again.set;
    let salted = by_speaker.iter().all(|(s, utts)| {
        policy(Role::Trial).rng_key(s) != policy(Role::Enroll).rng_key(s)
            && trial.set.get(utts[0]).unwrap().vector != enroll.set.get(utts[0]).unwrap().vector
    });
    let ok = one_vector && keys.len() == 6 && vectors.len() == 6 && deterministic && salted;
    verdict(
        "ac07",
        "one pseudo-speaker per speaker",
        ok,
        format!(
            "shared vector {one_vector}, distinct keys {}/6, distinct vectors {}/6, deterministic {deterministic}, role salts differ {salted}",
            keys.len(),
            vectors.len()
        ),
    );
}

#[test]
fn ac08_end_to_end_direction() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    gen_corpus(&CorpusSpec::new(8, 4, 2024), dir.path()).unwrap();
    let plan_path = dir.path().join("plan.ini");
    let report = run_plan(&EvalPlan::load(&plan_path).unwrap()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let row = |c| {
        report
            .rows
            .iter()
            .find(|r| r.condition == c && r.enrollment == Enrollment::Utterance)
            .unwrap()
    };
    let (oo, oa) = (row(Condition::UnprotectedOo), row(Condition::IgnorantOa));
    let deid = oa.deid.unwrap();
    verdict(
        "ac08",
        "end-to-end direction",
        oa.eer > oo.eer && deid > 0.0 && elapsed < 60.0,
        format!(
            "EER oo {:.2}% -> oa {:.2}%, DeID {deid:.3}, {elapsed:.1} s",
            oo.eer * 100.0,
            oa.eer * 100.0
        ),
    );
}

/// Purity by enumerating every map from clusters to speakers-or-nothing and
/// keeping the injective ones.
fn purity_oracle(labels: &[(usize, usize)], clusters: usize, speakers: usize) -> f64 {
    let choices = speakers + 1;
    let mut best = 0;
    for code in 0..choices.pow(clusters as u32) {
        let assign: Vec<usize> = (0..clusters).map(|c| code / choices.pow(c as u32) % choices).collect();
        let used: Vec<usize> = assign.iter().copied().filter(|&s| s < speakers).collect();
        if used.iter().collect::<BTreeSet<_>>().len() != used.len() {
            continue;
        }
        let hits = labels.iter().filter(|(s, c)| assign[*c] == *s).count();
        best = best.max(hits);
    }
    best as f64 / labels.len() as f64
}

/// Macro-F1 from per-speaker confusion counts with majority cluster labels.
fn f1_oracle(labels: &[(usize, usize)], clusters: usize, speakers: usize) -> f64 {
    let mut label_of = vec![0; clusters];
    for (c, label) in label_of.iter_mut().enumerate() {
        let counts: Vec<usize> = (0..speakers)
            .map(|s| labels.iter().filter(|&&(ls, lc)| ls == s && lc == c).count())
            .collect();
        let max = *counts.iter().max().unwrap();
        *label = counts.iter().position(|&n| n == max).unwrap();
    }
    let present: BTreeSet<usize> = labels.iter().map(|(s, _)| *s).collect();
    let mut total = 0.0;
    for &s in &present {
        let tp = labels.iter().filter(|&&(ls, c)| ls == s && label_of[c] == s).count() as f64;
        let fp = labels.iter().filter(|&&(ls, c)| ls != s && label_of[c] == s).count() as f64;
        let fneg = labels.iter().filter(|&&(ls, c)| ls == s && label_of[c] != s).count() as f64;
        if tp > 0.0 {
            total += 2.0 * tp / (2.0 * tp + fp + fneg);
        }
    }
    total / present.len() as f64
}

#[test]
fn ac09_purity_and_f1() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = 0;
    let mut checked = 0;
    for _ in 0..500 {
        let speakers = rng.random_range(1..=5);
        let clusters = rng.random_range(1..=4);
        let n = rng.random_range(clusters..=16);
        let mut labels: Vec<(usize, usize)> =
            (0..n).map(|_| (rng.random_range(0..speakers), rng.random_range(0..clusters))).collect();
        for c in 0..clusters {
            labels[c].1 = c;
        }
        let text: String = labels
            .iter()
            .enumerate()
            .map(|(i, (s, c))| format!("r{i:02} s{s} {c} {}\n", u8::from(*s == speakers - 1)))
            .collect();
        let trial = parse_clustering_trials(&text, "generated").unwrap().remove(0);
        // speaker ids sort as s0 < s1 < ..., matching the oracle's indices
        let present: Vec<usize> = labels.iter().map(|l| l.0).collect::<BTreeSet<_>>().into_iter().collect();
        let remap = |s: usize| present.iter().position(|&p| p == s).unwrap();
        let compact: Vec<(usize, usize)> = labels.iter().map(|&(s, c)| (remap(s), c)).collect();
        let p = clustering_purity(&trial).purity;
        let f = clustering_f1(&trial);
        if p != purity_oracle(&compact, clusters, present.len())
            || (f - f1_oracle(&compact, clusters, present.len())).abs() > 1e-15
        {
            mismatches += 1;
        }
        checked += 1;
    }
    let perfect = parse_clustering_trials("a s0 0 0\nb s0 0 0\nc s1 1 0\nd s2 2 0\ne x 3 1\n", "p")
        .unwrap()
        .remove(0);
    let perfect_ok = clustering_purity(&perfect).purity == 1.0 && clustering_f1(&perfect) == 1.0;
    let lump: String = (0..16)
        .map(|i| format!("r{i} {} 0 0\n", ["a", "a", "a", "a", "a", "a", "b", "b", "b", "b", "c", "c", "c", "c", "d", "d"][i]))
        .collect();
    let lumped = clustering_purity(&parse_clustering_trials(&lump, "l").unwrap().remove(0)).purity;
    verdict(
        "ac09",
        "purity and F1 enumeration",
        mismatches == 0 && perfect_ok && lumped == 0.375,
        format!("{checked} random trials, {mismatches} mismatches; perfect {perfect_ok}; one cluster {lumped}"),
    );
}

fn levenshtein(a: &[String], b: &[String]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1];
        for (j, y) in b.iter().enumerate() {
            cur.push((prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1));
        }
        prev = cur;
    }
    prev[b.len()]
}

#[test]
fn ac10_wer() {
    let t = |s: &str| Transcript::new("u", s);
    let hand = [
        ("a b c", "a b c", (0, 0, 0)),
        ("a b c", "a x c d", (1, 0, 1)),
        ("a b c d", "", (0, 4, 0)),
        ("the cat sat", "the sat", (0, 1, 0)),
        ("one two", "one two three four", (0, 0, 2)),
        ("a b c d e", "a c b d e", (2, 0, 0)),
    ];
    let hand_ok = hand.iter().all(|(r, h, (s, d, i))| {
        let c = wer(&t(r), &t(h)).unwrap();
        (c.substitutions, c.deletions, c.insertions) == (*s, *d, *i)
    });
    let two_thirds = wer(&t("a b c"), &t("a x c d")).unwrap().wer() == 2.0 / 3.0;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let vocab = ["ALPHA", "BRAVO", "CHARLIE", "DELTA", "ECHO", "FOXTROT"];
    let (mut refs, mut hyps) = (TranscriptSet::default(), TranscriptSet::default());
    let (mut errors, mut words, mut ratio_sum) = (0usize, 0usize, 0.0);
    let mut distance_ok = true;
    for u in 0..50 {
        let r: Vec<&str> = (0..rng.random_range(1..15)).map(|_| vocab[rng.random_range(0..6)]).collect();
        let mut h: Vec<&str> = Vec::new();
        for w in &r {
            match rng.random_range(0..10) {
                0 => {}
                1 => h.push(vocab[rng.random_range(0..6)]),
                2 => {
                    h.push(w);
                    h.push(vocab[rng.random_range(0..6)]);
                }
                _ => h.push(w),
            }
        }
        let id = format!("utt{u:02}");
        let (rt, ht) = (Transcript::new(&id, &r.join(" ")), Transcript::new(&id, &h.join(" ")));
        let c = wer(&rt, &ht).unwrap();
        distance_ok &= c.errors() == levenshtein(&rt.tokens, &ht.tokens)
            && align(&ht.tokens, &rt.tokens).substitutions == c.substitutions;
        errors += c.errors();
        words += r.len();
        ratio_sum += c.wer();
        refs.insert(rt);
        hyps.insert(ht);
    }
    let corpus = corpus_wer(&refs, &hyps).unwrap();
    let expected = errors as f64 / words as f64;
    let mean_of_ratios = ratio_sum / 50.0;
    verdict(
        "ac10",
        "WER",
        hand_ok && two_thirds && distance_ok && corpus.wer() == expected && corpus.utterances == 50,
        format!(
            "hand cases {hand_ok}; corpus {}/{} = {:.4} (mean of ratios would be {mean_of_ratios:.4})",
            corpus.counts.errors(),
            corpus.counts.ref_words,
            corpus.wer()
        ),
    );
}
