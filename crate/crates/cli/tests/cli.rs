use std::path::Path;
use std::process::{Command, Output};

use certband_cli::commands::{parse_config, run_measure, MeasureConfig};

fn certband(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_certband"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn jsonl_groups_feed_group_measures() {
    let tmp = tempfile::tempdir().unwrap();
    let mut lines = String::new();
    for i in 0..40 {
        let g = if i % 2 == 0 { "a" } else { "b" };
        lines.push_str(&format!("{{\"loss\": {}, \"group\": \"{g}\"}}\n", (i % 7) as f64 / 7.0));
    }
    std::fs::write(tmp.path().join("losses.jsonl"), lines).unwrap();
    std::fs::write(
        tmp.path().join("band.json"),
        r#"{"band": {"samples": {"input": "losses.jsonl", "support_max": 1.0, "group": "a"},
            "method": {"method": "dkw"}, "delta": 0.1}, "output": "a.json"}"#,
    )
    .unwrap();
    let out = certband(tmp.path(), &["band", "--config", "band.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let band: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(band["n"], 20);
}

#[test]
fn output_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("l.csv"), "loss\n0.1\n0.2\n0.3\n").unwrap();
    std::fs::write(
        tmp.path().join("m.json"),
        r#"{"band": {"samples": {"input": "l.csv", "support_max": 1.0}, "method": {"method": "berk_jones"}, "delta": 0.2},
            "measures": [{"kind": "mean"}, {"kind": "cvar", "beta": 0.5}], "output": "ignored.json"}"#,
    )
    .unwrap();
    let out = certband(
        tmp.path(),
        &["measure", "--config", "m.json", "--output", "chosen.json"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(tmp.path().join("chosen.json").exists());
    assert!(!tmp.path().join("ignored.json").exists());
}

#[test]
fn errors_name_the_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let out = certband(tmp.path(), &["band", "--config", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("missing.json"));

    std::fs::write(
        tmp.path().join("typo.json"),
        r#"{"band": {"method": {"method": "dkw"}}, "delt": 0.1}"#,
    )
    .unwrap();
    let out = certband(tmp.path(), &["band", "--config", "typo.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("delt"), "{}", stderr(&out));

    std::fs::write(tmp.path().join("p.csv"), "confidence,outcome\n0.7,1\n1.5,0\n").unwrap();
    let out = certband(tmp.path(), &["losses", "--metric", "brier", "--input", "p.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"));
}

#[test]
fn library_entry_matches_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("l.csv");
    std::fs::write(&csv, "loss\n0.05\n0.4\n0.2\n0.9\n").unwrap();
    let text = format!(
        r#"{{"band": {{"samples": {{"input": {:?}, "support_max": 1.0}}, "method": {{"method": "dkw"}}, "delta": 0.1}},
            "measures": [{{"kind": "gini"}}]}}"#,
        csv.display().to_string()
    );
    let cfg: MeasureConfig = parse_config(&text).unwrap();
    let report = run_measure(&cfg).unwrap();
    std::fs::write(tmp.path().join("m.json"), &text).unwrap();
    let out = certband(tmp.path(), &["measure", "--config", "m.json"]);
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed, serde_json::to_value(&report).unwrap());
}
