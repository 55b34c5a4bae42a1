use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_narrel");

fn narrel(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = narrel(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const CUE_CORPUS: &str = r#"{"id":"d1","characters":["Ann","Bob","Cy"],"edges":[{"a":"Ann","b":"Bob","gold":1,"cues":[{"name":"are_team","value":1},{"name":"lexical_sentiment_pos","value":2}]},{"a":"Ann","b":"Cy","gold":-1,"cues":[{"name":"lexical_sentiment_neg","value":3}],"pair_cues":{"character_similarity":0.1}},{"a":"Bob","b":"Cy","gold":-1,"cues":[{"name":"lexical_sentiment_neg","value":1},{"name":"lexical_sentiment_neg","value":2}]}]}
{"id":"d2","characters":["Dee","Eve"],"descriptor":[0.5],"edges":[{"a":"Dee","b":"Eve","gold":1,"cues":[{"name":"lexical_sentiment_pos","value":1}]}]}
"#;

#[test]
fn cue_corpus_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("cues.jsonl"), CUE_CORPUS).unwrap();
    ok(p, &["train", "--model", "spr", "--train", "cues.jsonl", "--out", "m.json", "--epochs", "20"]);
    let model: Value = serde_json::from_slice(&fs::read(p.join("m.json")).unwrap()).unwrap();
    assert_eq!(model["version"], 1);
    assert_eq!(model["kind"], "spr");
    assert_eq!(model["metadata"]["training"]["perceptron"], "averaged");
    let names: Vec<&str> = model["model"]["feature_names"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(names[..2], ["are_team:max", "are_team:sum"]);
    assert_eq!(*names.last().unwrap(), "character_similarity");

    let preds = ok(p, &["predict", "--model", "m.json", "--input", "cues.jsonl"]);
    let first: Value = serde_json::from_str(preds.lines().next().unwrap()).unwrap();
    assert_eq!(first["id"], "d1");
    assert_eq!(first["edges"].as_array().unwrap().len(), 3);
    assert_eq!(first["exact"], true);

    let out = ok(p, &["eval", "--model", "m.json", "--input", "cues.jsonl", "--json", "metrics.json"]);
    assert!(out.contains("accuracy"));
    let record: Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
    let file: Value = serde_json::from_slice(&fs::read(p.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(record, file);
    assert_eq!(record["metrics"]["total"], 4);
}

#[test]
fn census_reports_each_document() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cues.jsonl"), CUE_CORPUS).unwrap();
    let out = ok(dir.path(), &["census", "--input", "cues.jsonl"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "id\tclique\tlove_triangle\tcommon_enemy\tmexican_standoff\ttriangles");
    assert_eq!(lines[1], "d1\t0\t0\t1\t0\t1");
    assert_eq!(lines[2], "d2\t0\t0\t0\t0\t0");
    assert_eq!(lines[3], "total\t0\t0\t1\t0\t1");
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&narrel(p, &[])), 1);
    assert_eq!(code(&narrel(p, &["train", "--model", "forest", "--train", "x", "--out", "y"])), 1);
    assert_eq!(code(&narrel(p, &["synth", "--weights", "1,2,3"])), 1);
    assert_eq!(code(&narrel(p, &["synth", "--docs", "0"])), 1);
    assert_eq!(code(&narrel(p, &["--help"])), 0);
}

#[test]
fn data_errors_exit_with_two_and_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let bad = concat!(
        r#"{"id":"a","characters":["A","B"],"edges":[{"a":"A","b":"B","gold":1,"features":[1]}]}"#,
        "\n",
        r#"{"id":"b","characters":["A","B"],"edges":[{"a":"A","b":"B","gold":1,"features":[1]},{"a":"B","b":"A","gold":1,"features":[1]}]}"#,
        "\n",
    );
    fs::write(p.join("bad.jsonl"), bad).unwrap();
    let out = narrel(p, &["train", "--model", "lr", "--train", "bad.jsonl", "--out", "m.json"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("(A, B)"), "{err}");

    let unlabeled = r#"{"id":"a","characters":["A","B"],"edges":[{"a":"A","b":"B","features":[1]}]}"#;
    fs::write(p.join("unlabeled.jsonl"), unlabeled).unwrap();
    assert_eq!(code(&narrel(p, &["train", "--model", "spr", "--train", "unlabeled.jsonl", "--out", "m.json"])), 2);
    assert_eq!(code(&narrel(p, &["census", "--input", "missing.jsonl"])), 2);
}

#[test]
fn model_version_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--out", "c.jsonl", "--docs", "5"]);
    ok(p, &["train", "--model", "lr", "--train", "c.jsonl", "--out", "m.json"]);
    let mut v: Value = serde_json::from_slice(&fs::read(p.join("m.json")).unwrap()).unwrap();
    v["version"] = 7.into();
    fs::write(p.join("m.json"), serde_json::to_vec(&v).unwrap()).unwrap();
    let out = narrel(p, &["predict", "--model", "m.json", "--input", "c.jsonl"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("version 7"));
}

#[test]
fn feature_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--out", "five.jsonl", "--docs", "5", "--dim", "5"]);
    ok(p, &["synth", "--out", "three.jsonl", "--docs", "5", "--dim", "3"]);
    ok(p, &["train", "--model", "spr", "--train", "five.jsonl", "--out", "m.json", "--epochs", "2"]);
    assert_eq!(code(&narrel(p, &["predict", "--model", "m.json", "--input", "three.jsonl"])), 2);
}

#[test]
fn gradcheck_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = narrel(dir.path(), &["gradcheck", "--tol", "1e-30"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("max relative error"));
}

#[test]
fn mixture_log_records_every_half_step() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--out", "m.jsonl", "--docs", "20", "--profile", "0,0,8,-4:1", "--profile", "8,-4,0,0:-1"]);
    ok(p, &[
        "train", "--model", "mixture", "--train", "m.jsonl", "--out", "mix.json", "--outer-rounds", "2", "--lambda-iters", "4",
        "--epochs", "2", "--log", "log.jsonl",
    ]);
    let log = fs::read_to_string(p.join("log.jsonl")).unwrap();
    let rows: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let objectives: Vec<&Value> = rows.iter().filter(|r| r["type"] == "objective").collect();
    let steps: Vec<&Value> = rows.iter().filter(|r| r["type"] == "lambda_step").collect();
    assert_eq!(objectives.len(), 4);
    assert_eq!(steps.len(), 2 * 4 * 2);
    for s in steps {
        assert!(s["after"].as_f64().unwrap() <= s["before"].as_f64().unwrap() + 1e-9);
    }
    let preds = ok(p, &["predict", "--model", "mix.json", "--input", "m.jsonl"]);
    for line in preds.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["cluster"].as_u64().unwrap() < 2);
    }
}

#[test]
fn lr_predictions_carry_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--out", "c.jsonl", "--docs", "8", "--seed", "2"]);
    ok(p, &["train", "--model", "lr", "--train", "c.jsonl", "--out", "lr.json"]);
    let preds = ok(p, &["predict", "--model", "lr.json", "--input", "c.jsonl"]);
    for line in preds.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        for e in v["edges"].as_array().unwrap() {
            let prob = e["probability"].as_f64().unwrap();
            assert!(prob > 0.0 && prob < 1.0);
            assert_eq!(e["label"].as_i64().unwrap() == 1, prob >= 0.5);
        }
    }
}
