//! Command-line contract: exit codes, error records, config echo.

use std::process::{Command, Output};

fn tweak(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tweak"))
        .args(args)
        .env_remove("TWEAK_BRIDGE_ADDR")
        .output()
        .unwrap()
}

fn last_stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr is not empty");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {line}"))
}

fn world(dir: &std::path::Path) {
    let d = dir.join("w").display().to_string();
    assert!(tweak(&["make-corpus", "--out-dir", &d, "--instances", "10", "--seed", "2"]).status.success());
    let lm = dir.join("lm.json").display().to_string();
    assert!(tweak(&["train-lm", "--corpus", &format!("{d}/lm_train.jsonl"), "--out", &lm]).status.success());
}

#[test]
fn missing_model_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    world(dir.path());
    let corpus = dir.path().join("w/corpus.jsonl").display().to_string();
    let missing = dir.path().join("absent.json").display().to_string();
    let out = tweak(&["decode", "--corpus", &corpus, "--lm", &format!("toy:{missing}"), "--out", "o.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let rec = last_stderr_json(&out);
    assert_eq!(rec["path"], missing.as_str());
    assert_eq!(rec["exit_code"], 2);
}

#[test]
fn usage_errors_exit_2_with_a_json_record() {
    for args in [
        vec!["decode"],
        vec!["no-such-command"],
        vec!["decode", "--corpus", "c", "--lm", "gpt:x", "--out", "o"],
        vec!["sweep", "--corpus", "c", "--axis", "gamma", "--values", "1"],
    ] {
        let out = tweak(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(last_stderr_json(&out)["error"], "usage", "{args:?}");
        assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1, "{args:?}");
    }
}

#[test]
fn tweak_strategy_without_verifier_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    world(dir.path());
    let corpus = dir.path().join("w/corpus.jsonl").display().to_string();
    let lm = format!("toy:{}", dir.path().join("lm.json").display());
    let out = tweak(&["decode", "--corpus", &corpus, "--lm", &lm, "--strategy", "tweak-hvm", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    let out = tweak(&["decode", "--corpus", &corpus, "--lm", &lm, "--strategy", "beam", "--k", "0", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreachable_bridge_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    world(dir.path());
    let corpus = dir.path().join("w/corpus.jsonl").display().to_string();
    let lm = format!("toy:{}", dir.path().join("lm.json").display());
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    drop(listener);
    let out = tweak(&[
        "decode", "--corpus", &corpus, "--lm", &lm, "--strategy", "tweak-nli-bf", "--verifier", "nli-remote", "--bridge", &addr, "--out", "o",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(last_stderr_json(&out)["error"], "runtime");
}

#[test]
fn effective_config_is_echoed_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    world(dir.path());
    let corpus = dir.path().join("w/corpus.jsonl").display().to_string();
    let dict = dir.path().join("w/dictionary.json").display().to_string();
    let lm = format!("toy:{}", dir.path().join("lm.json").display());
    let outputs = dir.path().join("out.jsonl");
    let out = tweak(&[
        "decode", "--corpus", &corpus, "--lm", &lm, "--strategy", "tweak-nli-bf", "--verifier", "nli-oracle", "--dictionary", &dict, "--out",
        &outputs.display().to_string(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echo: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().next().unwrap()).unwrap();
    assert_eq!(echo["command"], "decode");
    assert_eq!(echo["decode_config"]["k"], 4);
    assert_eq!(echo["decode_config"]["alpha"], 8.0);
    assert_eq!(echo["decode_config"]["max_len"], 64);
    assert_eq!(echo["flags"]["seed"], 0);
    let lines = std::fs::read_to_string(outputs).unwrap();
    assert_eq!(lines.lines().count(), 10);
}

#[test]
fn synth_fate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    world(dir.path());
    let w = dir.path().join("w");
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = tweak(&[
            "synth-fate",
            "--corpus",
            &w.join("corpus.jsonl").display().to_string(),
            "--pools",
            &w.join("pools.json").display().to_string(),
            "--templates",
            &w.join("templates.json").display().to_string(),
            "--seed",
            "7",
            "--splits",
            "all",
            "--out-dir",
            &out_dir.display().to_string(),
        ]);
        assert!(out.status.success());
        ["fate.jsonl", "pairs.jsonl", "dictionary.json"].map(|f| std::fs::read(out_dir.join(f)).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}
