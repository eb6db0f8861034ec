use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn podintro(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_podintro"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = podintro(dir, args);
    assert!(
        out.status.success(),
        "podintro {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap()
}

/// Small corpus whose intro and body vocabularies never mix.
fn separable_config(dir: &Path) {
    fs::write(
        dir.join("synth.json"),
        r#"{"programs": 8, "episodes_per_program": 6, "vocab_mix": 0.0, "noise_prob": 0.0, "seed": 9}"#,
    )
    .unwrap();
}

fn run_pipeline(dir: &Path) {
    separable_config(dir);
    ok(dir, &["synth", "--config", "synth.json", "-o", "corpus.jsonl", "--embeddings-out", "vec.txt", "--dim", "24"]);
    ok(dir, &["gold", "corpus.jsonl", "-o", "gold.jsonl"]);
    ok(dir, &["split", "corpus.jsonl", "--seed", "4", "-o", "split.json"]);
    ok(dir, &["augment", "corpus.jsonl", "--strategy", "tfidfwr", "--seed", "1", "--copies", "2", "--split", "split.json", "-o", "aug.jsonl"]);
    ok(dir, &["train", "aug.jsonl", "--split", "split.json", "--embeddings", "vec.txt", "--lr", "1.0", "--epochs", "100", "-o", "model.json"]);
    ok(dir, &["score", "corpus.jsonl", "--model", "model.json", "--embeddings", "vec.txt", "--split", "split.json", "--subset", "seen_test", "-o", "scores.jsonl"]);
    ok(dir, &["segment", "scores.jsonl", "--k", "50", "--corpus", "corpus.jsonl", "-o", "preds.jsonl"]);
    ok(dir, &["evaluate", "preds.jsonl", "--gold", "gold.jsonl", "--k", "50", "-o", "report.json"]);
}

#[test]
fn synth_to_evaluate_completes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    run_pipeline(dir);

    let report = read_json(dir.join("report.json"));
    assert_eq!(report["k"], 50);
    assert_eq!(report["offsets"], serde_json::json!([0, 1, 3, 5, 9]));
    let overlap = report["mean_overlap"]["mean"].as_f64().unwrap();
    assert!(overlap > 0.8, "mean overlap {overlap}");

    let csv = fs::read_to_string(dir.join("report.json.overlap.csv")).unwrap();
    assert!(csv.starts_with("episode_id,overlap\n"));
    assert!(fs::read_to_string(dir.join("report.json.txt")).unwrap().contains("offset"));

    for artifact in ["corpus.jsonl", "gold.jsonl", "split.json", "aug.jsonl", "model.json", "scores.jsonl", "preds.jsonl", "report.json"] {
        let manifest = read_json(dir.join(format!("{artifact}.manifest.json")));
        assert_eq!(manifest["outputs"][0], artifact);
        assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
        assert!(manifest["duration_ms"].is_number());
    }
    let model = read_json(dir.join("model.json"));
    assert_eq!(model["format"], "podintro-logistic");
    assert_eq!(model["dim"], 24);
    assert_eq!(model["train_config"]["learning_rate"], 1.0);
}

#[test]
fn reruns_reproduce_outputs_bitwise() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    run_pipeline(a.path());
    run_pipeline(b.path());
    let mut compared = 0;
    for entry in fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        let name = name.to_string_lossy();
        if name.ends_with(".manifest.json") {
            let strip = |v: Value| {
                let mut v = v;
                v.as_object_mut().unwrap().remove("duration_ms");
                v
            };
            assert_eq!(
                strip(read_json(a.path().join(&*name))),
                strip(read_json(b.path().join(&*name))),
                "{name}"
            );
        } else {
            assert_eq!(
                fs::read(a.path().join(&*name)).unwrap(),
                fs::read(b.path().join(&*name)).unwrap(),
                "{name}"
            );
        }
        compared += 1;
    }
    assert!(compared >= 20);
}

#[test]
fn validate_accepts_synth_output() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["synth", "--seed", "2", "-o", "c.jsonl"]);
    let out = ok(tmp.path(), &["validate", "c.jsonl"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("200 episodes"));
}

#[test]
fn validate_names_file_and_line() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("bad.jsonl"),
        "{\"episode_id\":\"a\",\"program_id\":\"p\",\"tokens\":[{\"text\":\"x\"}]}\n\
         {\"episode_id\":\"b\",\"program_id\":\"p\"}\n",
    )
    .unwrap();
    let out = podintro(tmp.path(), &["validate", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.jsonl:2") && err.contains("tokens"), "{err}");
}

#[test]
fn segment_rejects_short_episode() {
    let tmp = TempDir::new().unwrap();
    let long = vec!["0.5"; 120].join(",");
    let short = vec!["0.5"; 60].join(",");
    fs::write(
        tmp.path().join("s.jsonl"),
        format!(
            "{{\"episode_id\":\"long\",\"scores\":[{long}]}}\n{{\"episode_id\":\"tiny\",\"scores\":[{short}]}}\n"
        ),
    )
    .unwrap();
    let out = podintro(tmp.path(), &["segment", "s.jsonl", "--k", "50", "-o", "p.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`tiny`") && err.contains("lower k"), "{err}");
    assert!(!tmp.path().join("p.jsonl").exists());
    ok(tmp.path(), &["segment", "s.jsonl", "--k", "30", "-o", "p.jsonl"]);
}

#[test]
fn segment_rejects_out_of_range_scores() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("s.jsonl"), "{\"episode_id\":\"e\",\"scores\":[0.1,1.5,0.2,0.3]}\n").unwrap();
    let out = podintro(tmp.path(), &["segment", "s.jsonl", "--k", "1", "-o", "p.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("index 1"));
}

#[test]
fn usage_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(podintro(tmp.path(), &["segment"]).status.code(), Some(2));
    assert_eq!(
        podintro(tmp.path(), &["augment", "c.jsonl", "--strategy", "bogus", "--seed", "1", "-o", "x"]).status.code(),
        Some(2)
    );
}

#[test]
fn every_subcommand_has_help() {
    let tmp = TempDir::new().unwrap();
    for cmd in ["validate", "agreement", "gold", "split", "synth", "augment", "train", "score", "segment", "evaluate"] {
        let out = ok(tmp.path(), &[cmd, "--help"]);
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{cmd}");
    }
}

#[test]
fn agreement_prints_report_json() {
    let tmp = TempDir::new().unwrap();
    let doc = |id: &str, starts: [usize; 3]| {
        let tokens: Vec<String> = (0..200)
            .map(|i| format!("{{\"text\":\"w\",\"start_ms\":{},\"end_ms\":{}}}", i * 500, i * 500 + 400))
            .collect();
        let anns: Vec<String> = starts
            .iter()
            .enumerate()
            .map(|(a, s)| format!("{{\"annotator_id\":\"a{a}\",\"intro\":{{\"start\":{s},\"end\":150}}}}"))
            .collect();
        format!(
            "{{\"episode_id\":\"{id}\",\"program_id\":\"p\",\"tokens\":[{}],\"annotations\":[{}]}}\n",
            tokens.join(","),
            anns.join(",")
        )
    };
    // 500 ms per token: 2 s is 4 tokens.
    fs::write(tmp.path().join("c.jsonl"), doc("e1", [10, 12, 13]) + &doc("e2", [10, 12, 80])).unwrap();
    let out = ok(tmp.path(), &["agreement", "c.jsonl", "-o", "agree.json"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["episodes"], 2);
    assert_eq!(report["starts"]["perfect"], serde_json::json!(["e1"]));
    assert_eq!(report["starts"]["majority"], serde_json::json!(["e2"]));
    assert!(tmp.path().join("agree.json.manifest.json").exists());
}
