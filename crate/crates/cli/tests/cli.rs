//! Runs the `convextopics` binary against a small labeled corpus.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const THEMES: [[&str; 6]; 4] = [
    ["orbit", "launch", "shuttle", "rocket", "satellite", "lunar"],
    ["goalie", "puck", "playoff", "skate", "rink", "penalty"],
    ["cipher", "encryption", "clipper", "escrow", "algorithm", "privacy"],
    ["engine", "brakes", "sedan", "dealer", "mileage", "tires"],
];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_convextopics"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_corpus(dir: &Path) -> PathBuf {
    let path = dir.join("docs.jsonl");
    let mut lines = String::new();
    for (t, words) in THEMES.iter().enumerate() {
        for d in 0..40 {
            let w = |o: usize| words[(d * 5 + o * 7) % words.len()];
            let text = format!("the {} with {} and {} near {}, then {}", w(0), w(1), w(2), w(3), w(4));
            let doc = serde_json::json!({
                "id": format!("t{t}-d{d:02}"),
                "title": w(5),
                "text": text,
                "labels": [format!("theme{t}")],
            });
            lines.push_str(&doc.to_string());
            lines.push('\n');
        }
    }
    fs::write(&path, lines).unwrap();
    path
}

fn write_config(dir: &Path) -> PathBuf {
    write_corpus(dir);
    let path = dir.join("run.toml");
    fs::write(&path, "corpus = \"docs.jsonl\"\noutput = \"out\"\nmin_df = 3\nthreads = 1\n").unwrap();
    path
}

fn stage_lines(out: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("stage line is JSON"))
        .collect()
}

#[test]
fn help_shows_default_thresholds() {
    let out = run(&["fit", "--help"]);
    assert_eq!(code(&out), 0);
    let help = String::from_utf8_lossy(&out.stdout);
    assert!(help.contains("0.05"), "{help}");
    assert!(help.contains("0.01"), "{help}");
}

#[test]
fn run_writes_artifacts_and_stage_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let out = run(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stages: Vec<String> = stage_lines(&out)
        .iter()
        .map(|v| v["stage"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(stages, ["load", "vocabulary", "similarity", "fit", "rank", "evaluate"]);
    for name in ["vocabulary.json", "similarity.bin", "model.json", "scores.json", "eval.json", "report.html", "manifest.json"] {
        assert!(tmp.path().join("out").join(name).is_file(), "missing {name}");
    }
}

#[test]
fn stage_commands_chain_to_the_same_model() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let cfg = config.to_str().unwrap();
    let staged = tmp.path().join("staged");
    let staged = staged.to_str().unwrap();
    for cmd in ["ingest", "vocab", "similarity", "fit", "score", "eval"] {
        let out = run(&[cmd, "-c", cfg, "-o", staged]);
        assert_eq!(code(&out), 0, "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = run(&["run", "-c", cfg]);
    assert_eq!(code(&out), 0);
    for name in ["vocabulary.json", "model.json", "scores.json", "eval.json"] {
        assert_eq!(
            fs::read(Path::new(staged).join(name)).unwrap(),
            fs::read(tmp.path().join("out").join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn eval_accepts_external_scores_without_a_model() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write_corpus(tmp.path());
    let mut records = Vec::new();
    for t in 0..THEMES.len() {
        let ranking: Vec<_> = (0..40)
            .map(|d| serde_json::json!([format!("t{t}-d{d:02}"), 1.0 - d as f64 / 100.0]))
            .collect();
        records.push(serde_json::json!({ "topic_id": t, "ranking": ranking }));
    }
    let scores = tmp.path().join("external.json");
    fs::write(&scores, serde_json::to_string(&records).unwrap()).unwrap();
    let out_dir = tmp.path().join("ext");
    let out = run(&[
        "eval",
        "--corpus",
        corpus.to_str().unwrap(),
        "--scores",
        scores.to_str().unwrap(),
        "--output",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let eval: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("eval.json")).unwrap()).unwrap();
    assert_eq!(eval["maxmap"].as_f64().unwrap(), 1.0);
    assert_eq!(eval["n_used"].as_u64().unwrap(), 4);
}

#[test]
fn report_renders_from_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    assert_eq!(code(&run(&["run", "-c", config.to_str().unwrap()])), 0);
    let dest = tmp.path().join("again.html");
    let out = run(&["report", "-o", tmp.path().join("out").to_str().unwrap(), "--report", dest.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let html = fs::read_to_string(&dest).unwrap();
    assert!(html.starts_with("<!DOCTYPE html>"));
    assert!(html.contains("MaxMAP"));
    assert_eq!(html, fs::read_to_string(tmp.path().join("out/report.html")).unwrap());
}

#[test]
fn invalid_parameters_exit_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let out = run(&["fit", "-c", config.to_str().unwrap(), "--cutoff", "1.5"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cutoff"));
    assert_eq!(code(&run(&["run", "--no-such-flag"])), 1);
    assert_eq!(code(&run(&["run", "--corpus", "/nonexistent/docs.jsonl"])), 1);
    fs::write(tmp.path().join("bad.toml"), "cutof = 0.1\n").unwrap();
    assert_eq!(code(&run(&["run", "-c", tmp.path().join("bad.toml").to_str().unwrap()])), 1);
}

#[test]
fn missing_artifacts_exit_with_runtime_code() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write_corpus(tmp.path());
    let out = run(&["eval", "--corpus", corpus.to_str().unwrap(), "-o", tmp.path().join("empty").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.json"));
}
