use std::path::Path;
use std::process::{Command, Output};

fn vpkit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vpkit"))
        .args(args)
        .current_dir(dir)
        .env("VPKIT_JOBS", "2")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = vpkit(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn value(stdout: &str, name: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(name)?.strip_prefix(' ')?.parse().ok())
        .unwrap_or_else(|| panic!("no `{name}` in {stdout}"))
}

fn corpus(dir: &Path) {
    ok(dir, &["gen-corpus", "--out", "c", "--speakers", "6", "--utterances", "3", "--seed", "5"]);
}

#[test]
fn generated_plan_runs() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let c = dir.path().join("c");
    let stdout = ok(&c, &["run", "--plan", "plan.ini"]);
    assert!(stdout.contains("unprotected_oo") && stdout.contains("ignorant_oa"), "{stdout}");
    let csv = std::fs::read_to_string(c.join("results/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(c.join("results/anon/trial").is_dir());
}

#[test]
fn score_pairs_feed_verification_metrics() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let c = dir.path().join("c");
    ok(&c, &["score", "pairs", "--audio-dir", "wav", "--trials", "trials.key", "--out", "s.txt", "--cal", "20,-18"]);
    let scores = std::fs::read_to_string(c.join("s.txt")).unwrap();
    let key = std::fs::read_to_string(c.join("trials.key")).unwrap();
    assert_eq!(scores.lines().count(), key.lines().count());

    let eer = value(&ok(&c, &["metrics", "eer", "--scores", "s.txt", "--key", "trials.key"]), "eer");
    assert!((0.0..0.2).contains(&eer), "{eer}");
    let cllr = value(&ok(&c, &["metrics", "cllr", "--scores", "s.txt", "--key", "trials.key"]), "cllr");
    let min = value(&ok(&c, &["metrics", "cllrmin", "--scores", "s.txt", "--key", "trials.key"]), "cllr_min");
    assert!(min <= cllr + 1e-6);

    ok(&c, &["score", "pairs", "--audio-dir", "wav", "--trials", "trials.key", "--out", "fit.txt", "--calibrate"]);
    let fitted = value(&ok(&c, &["metrics", "cllr", "--scores", "fit.txt", "--key", "trials.key"]), "cllr");
    assert!(fitted < 1.0, "{fitted}");
}

#[test]
fn mcadams_file_and_directory() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let c = dir.path().join("c");
    ok(&c, &["anonymize", "mcadams", "--in", "wav/spk00-u00.wav", "--out", "one/x.wav"]);
    assert!(c.join("one/x.wav").is_file());

    ok(&c, &["anonymize", "mcadams", "--in", "wav", "--out", "anon", "--radius-scale", "0.975"]);
    assert_eq!(std::fs::read_dir(c.join("anon")).unwrap().count(), 18);

    std::fs::write(c.join("wav/broken.wav"), b"nope").unwrap();
    let out = vpkit(&c, &["anonymize", "mcadams", "--in", "wav", "--out", "anon2"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken"));
    assert!(c.join("anon2/spk05-u02.wav").is_file());
}

#[test]
fn similarity_matrix_and_derived_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let segs = ["a1", "a2", "b1", "b2", "c1", "c2"];
    let mut scores = String::new();
    for (i, x) in segs.iter().enumerate() {
        for y in &segs[i..] {
            let s = if x[..1] == y[..1] { 2.0 } else { -1.0 - i as f64 * 0.1 };
            scores.push_str(&format!("{x} {y} {s}\n"));
        }
    }
    std::fs::write(d.join("pairs.txt"), scores).unwrap();
    std::fs::write(d.join("utt2spk"), segs.iter().map(|s| format!("{s} {}\n", &s[..1])).collect::<String>()).unwrap();

    ok(d, &["metrics", "simmatrix", "--scores", "pairs.txt", "--utt2spk", "utt2spk", "--mode", "oo", "--out", "m.csv", "--heatmap", "m.png"]);
    let csv = std::fs::read_to_string(d.join("m.csv")).unwrap();
    assert!(csv.starts_with("speaker,a,b,c"), "{csv}");
    assert!(image::open(d.join("m.png")).is_ok());
    assert_eq!(value(&ok(d, &["metrics", "deid", "--oa", "m.csv", "--oo", "m.csv"]), "deid"), 0.0);
    assert_eq!(value(&ok(d, &["metrics", "gvd", "--aa", "m.csv", "--oo", "m.csv"]), "gvd_db"), 0.0);

    // oa needs every ordered pair
    let out = vpkit(d, &["metrics", "simmatrix", "--scores", "pairs.txt", "--utt2spk", "utt2spk", "--mode", "oa"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("have no score"));
}

#[test]
fn embedding_anonymization() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let vec = |i: usize| (0..4).map(|k| ((i * 7 + k * 3) % 11) as f64 - 5.0).map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let pool: String = (0..20).map(|i| format!("p{i} ps{} {}\n", i / 2, vec(i))).collect();
    let input: String = (0..6).map(|i| format!("u{i} s{} {}\n", i / 3, vec(100 + i))).collect();
    std::fs::write(d.join("pool.emb"), pool).unwrap();
    std::fs::write(d.join("in.emb"), input).unwrap();
    let args = ["anonymize", "embed", "--pool", "pool.emb", "--in", "in.emb", "--n", "10", "--n-star", "5", "--seed", "3"];
    ok(d, &[&args[..], &["--out", "t.emb", "--role", "trial"]].concat());
    ok(d, &[&args[..], &["--out", "t2.emb", "--role", "trial"]].concat());
    ok(d, &[&args[..], &["--out", "e.emb", "--role", "enroll"]].concat());
    let t = std::fs::read_to_string(d.join("t.emb")).unwrap();
    assert_eq!(t, std::fs::read_to_string(d.join("t2.emb")).unwrap());
    assert_ne!(t, std::fs::read_to_string(d.join("e.emb")).unwrap());
    let vectors: Vec<&str> = t.lines().map(|l| l.split(' ').nth(2).unwrap()).collect();
    assert_eq!(vectors.len(), 6);
    assert!(vectors[0] == vectors[1] && vectors[1] == vectors[2] && vectors[0] != vectors[3]);

    let out = vpkit(d, &[&args[..6], &["--out", "x.emb", "--n", "50"]].concat());
    assert!(!out.status.success());
}

#[test]
fn utility_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("ref"), "u1 the cat sat\nu2 a b c\n").unwrap();
    std::fs::write(d.join("hyp"), "u1 the cat sat down\nu2 a x c\n").unwrap();
    let w = ok(d, &["metrics", "wer", "--ref", "ref", "--hyp", "hyp"]);
    assert!((value(&w, "wer") - 2.0 / 6.0).abs() < 1e-6);
    assert_eq!(value(&w, "insertions"), 1.0);

    std::fs::write(
        d.join("clusters"),
        "r1 s1 0 0\nr2 s1 0 0\nr3 s2 1 0\nr4 x 1 1\n\nq1 s1 0 0\nq2 s2 0 0\n",
    )
    .unwrap();
    let p = ok(d, &["metrics", "purity", "--trials", "clusters"]);
    assert_eq!(value(&p, "mean_purity"), 0.625);
    let f = ok(d, &["metrics", "f1", "--trials", "clusters"]);
    assert!(f.contains("trial 0 f1") && f.contains("mean_f1"));
}

#[test]
fn usage_and_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = vpkit(dir.path(), &["metrics", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    let out = vpkit(dir.path(), &["metrics", "eer", "--scores", "missing.txt", "--key", "k"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = vpkit(dir.path(), &["--jobs", "0", "gen-corpus", "--out", "x"]);
    assert!(!out.status.success());
}
