use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use albm::classifier::ConceptClassifier;
use albm_cli::report::Report;
use tempfile::TempDir;

fn albm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_albm")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = albm(args);
    assert!(out.status.success(), "albm {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn synth(extra: &[&str]) -> (TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_str().unwrap().to_string();
    let mut args = vec!["synth", "--out", &path];
    args.extend_from_slice(extra);
    ok(&args);
    let config = dir.path().join("run.toml").to_str().unwrap().to_string();
    (dir, config)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn golden() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/oxford_pets")
}

/// Rows of a float32 store, decoded without the library.
fn read_rows(manifest: &Path) -> Vec<Vec<f64>> {
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
    let d = m["d"].as_u64().unwrap() as usize;
    let bytes = std::fs::read(manifest.with_extension("f32")).unwrap();
    let vals: Vec<f64> = bytes.chunks(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    vals.chunks(d).map(<[f64]>::to_vec).collect()
}

fn read_labels(manifest: &Path) -> Vec<usize> {
    std::fs::read_to_string(manifest.with_extension("labels")).unwrap().lines().map(|l| l.parse().unwrap()).collect()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[test]
fn same_config_gives_byte_identical_csv() {
    let (dir, config) = synth(&[]);
    for mode in ["albm", "base2novel", "fewshot", "nec-sweep"] {
        let a = dir.path().join(format!("{mode}-a.csv"));
        let b = dir.path().join(format!("{mode}-b.csv"));
        ok(&["eval", mode, "--config", &config, "--out", s(&a)]);
        ok(&["eval", mode, "--config", &config, "--out", s(&b)]);
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), "{mode}");
    }
}

#[test]
fn reported_accuracy_matches_independent_recomputation() {
    let (dir, config) = synth(&["--classes", "5", "--attributes", "3", "--noise", "0.5"]);
    let p = |n: &str| dir.path().join(n);
    let concepts = read_rows(&p("concept_emb.json"));
    let names = read_rows(&p("name_emb.json"));
    let test = read_rows(&p("test.json"));
    let labels = read_labels(&p("test.json"));
    let (k, n_a) = (names.len(), concepts.len() / names.len());
    let concepts: Vec<Vec<f64>> = concepts.iter().map(|c| unit(c)).collect();
    let names: Vec<Vec<f64>> = names.iter().map(|c| unit(c)).collect();

    ok(&["train", "walpha", "--config", &config, "--out", s(&p("w.ckpt"))]);
    let weights = ConceptClassifier::load(&p("w.ckpt")).unwrap().weights;

    let mut hits = [0usize; 3];
    for (f, &y) in test.iter().zip(&labels) {
        let f = unit(f);
        let s: Vec<Vec<f64>> = (0..k).map(|i| (0..n_a).map(|j| dot(&concepts[i * n_a + j], &f)).collect()).collect();
        let clip: Vec<f64> = names.iter().map(|n| dot(n, &f)).collect();
        let mean: Vec<f64> = s.iter().map(|row| row.iter().sum::<f64>()).collect();
        let trained: Vec<f64> = (0..k).map(|i| (0..n_a).map(|j| weights[[i, j]] * s[i][j]).sum()).collect();
        for (h, logits) in hits.iter_mut().zip([&clip, &mean, &trained]) {
            *h += usize::from(argmax(logits) == y);
        }
    }
    let n = labels.len() as f64;
    let ckpt = p("w.ckpt");
    for (mode, h) in ["zeroshot-clip", "zeroshot-albm", "albm"].iter().zip(hits) {
        let csv = p(&format!("{mode}.csv"));
        let mut args = vec!["eval", mode, "--config", &config, "--out", s(&csv)];
        if *mode == "albm" {
            args.extend(["--checkpoint", s(&ckpt)]);
        }
        ok(&args);
        let report = Report::load(&csv).unwrap();
        assert_eq!(report.rows[0].top1, h as f64 / n, "{mode}");
    }
}

#[test]
fn nec_sweep_at_full_support_equals_plain_eval() {
    let (dir, config) = synth(&["--attributes", "6", "--noise", "0.6"]);
    let a = dir.path().join("albm.csv");
    let n = dir.path().join("nec.csv");
    ok(&["eval", "albm", "--config", &config, "--out", s(&a)]);
    ok(&["eval", "nec-sweep", "--config", &config, "--out", s(&n)]);
    let full = Report::load(&a).unwrap().rows[0].clone();
    let sweep = Report::load(&n).unwrap().rows;
    assert_eq!(sweep.iter().map(|r| r.nec.unwrap()).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6]);
    assert_eq!(sweep[5].top1, full.top1);
    assert_eq!(sweep[5].loss, full.loss);
}

#[test]
fn report_embeds_config_hash_and_seed() {
    let (dir, config) = synth(&[]);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["eval", "zeroshot-albm", "--config", &config, "--out", s(&a)]);
    ok(&["eval", "zeroshot-albm", "--config", &config, "--seed", "4", "--out", s(&b)]);
    let (ra, rb) = (Report::load(&a).unwrap(), Report::load(&b).unwrap());
    assert_eq!(ra.meta("albm"), Some(env!("CARGO_PKG_VERSION")));
    assert_eq!(ra.meta("seed"), Some("0"));
    assert_eq!(rb.meta("seed"), Some("4"));
    assert_ne!(ra.meta("config_sha256"), rb.meta("config_sha256"));
    assert_eq!(rb.rows[0].seed, 4);
}

#[test]
fn base2novel_reports_both_class_sets() {
    let (dir, config) = synth(&["--classes", "7"]);
    let csv = dir.path().join("b2n.csv");
    ok(&["eval", "base2novel", "--config", &config, "--out", s(&csv)]);
    let rows = Report::load(&csv).unwrap().rows;
    assert_eq!(rows.iter().map(|r| r.class_set.as_str()).collect::<Vec<_>>(), ["base", "novel"]);
    let text = ok(&["report", s(&csv)]);
    assert!(text.contains("HM"), "{text}");
}

#[test]
fn inconsistent_inputs_list_every_mismatch() {
    let (dir, config) = synth(&["--classes", "4", "--dim", "16"]);
    let other = tempfile::tempdir().unwrap();
    ok(&["synth", "--out", s(other.path()), "--classes", "5", "--dim", "12"]);
    std::fs::copy(other.path().join("name_emb.json"), dir.path().join("name_emb.json")).unwrap();
    std::fs::copy(other.path().join("name_emb.f32"), dir.path().join("name_emb.f32")).unwrap();
    let out = albm(&["eval", "zeroshot-clip", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("name store has 5 rows"), "{err}");
    assert!(err.contains("name store has d = 12"), "{err}");
}

#[test]
fn missing_paths_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "[data]\nconcepts = \"nope.json\"\n").unwrap();
    let out = albm(&["eval", "albm", "--config", s(&config)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for key in ["data.concepts", "data.concept_store", "data.name_store", "data.test_store", "data.train_store"] {
        assert!(err.contains(key), "{key} missing from {err}");
    }
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "[train]\nlearning_rate = 0.1\n").unwrap();
    assert_eq!(albm(&["eval", "albm", "--config", s(&config)]).status.code(), Some(2));
}

#[test]
fn divergent_training_exits_with_three() {
    let (dir, config) = synth(&[]);
    let out = albm(&["train", "walpha", "--config", &config, "--lr", "1e308", "--tau", "0.001", "--out", s(&dir.path().join("w"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn dss_replay_reproduces_the_golden_concept_file() {
    let g = golden();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("concepts.json");
    let text = ok(&[
        "dss",
        "--classes",
        s(&g.join("classes.txt")),
        "--concepts",
        s(&g.join("concepts.json")),
        "--mode",
        "replay",
        "--r",
        "30",
        "--cache-dir",
        s(&g.join("llm")),
        "--model",
        "scripted-oxford-pets",
        "--out",
        s(&out),
    ]);
    assert!(text.contains("37 classes, 12 attributes"), "{text}");
    assert!(text.contains("removed as sparse (r = 30%): whiskers"), "{text}");
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(g.join("expected_concepts.json")).unwrap());
}

#[test]
fn dss_replay_without_fixtures_fails_cleanly() {
    let g = golden();
    let dir = tempfile::tempdir().unwrap();
    let out = albm(&[
        "dss",
        "--concepts",
        s(&g.join("concepts.json")),
        "--cache-dir",
        s(dir.path()),
        "--out",
        s(&dir.path().join("x.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no recorded fixture"));
}

#[test]
fn prompt_training_writes_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("prompts.bin");
    let text = ok(&["train", "prompts", "--out", s(&ckpt)]);
    assert!(text.contains("attribute accuracy after:  1.000 1.000 1.000"), "{text}");
    let (prompts, _, seed) = albm::vapl::AttributePrompts::load(&ckpt).unwrap();
    assert_eq!(prompts.len(), 3);
    assert_eq!(seed, 0);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(albm(&["eval", "no-such-mode", "--config", "x"]).status.code(), Some(2));
    assert_eq!(albm(&[]).status.code(), Some(2));
}
