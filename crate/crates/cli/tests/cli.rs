use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn privcode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privcode"))
        .args(args)
        .env_remove("PRIVCODE_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &str = r#"
seed = 5

[datagen]
num_patients = 200
num_labels = 4
tail_codes = 2
background_vocab = 60
min_background_tokens = 8
max_background_tokens = 16

[preprocess]
top_k = 4

[[models]]
name = "m"
embed_dim = 8
hidden_dim = 8
attention_dim = 8
segment_len = 16
max_len = 64

[optimizer]
base_lr = 0.02
warmup_steps = 4
batch_size = 16
max_epochs = 2

[privacy]
target_epsilon = 8.0
clip_norm = 0.1
"#;

#[test]
fn account_prints_one_json_line_and_writes_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = privcode(&[
        "account", "--rho", "1", "--q", "0.01", "--steps", "1000", "--delta", "1e-5", "--output-dir",
        path(tmp.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let prv = v["prv"]["epsilon"].as_f64().unwrap();
    let rdp = v["rdp"]["epsilon"].as_f64().unwrap();
    assert!(prv > 1.7 && prv < rdp, "{prv} vs {rdp}");
    assert_eq!(v["steps"], 1000);

    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("accounting/account.json")).unwrap()).unwrap();
    assert_eq!(report, v);
}

#[test]
fn output_dir_can_come_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_privcode"))
        .args(["calibrate", "--target-epsilon", "5", "--q", "0.01", "--steps", "100", "--delta", "1e-5"])
        .env("PRIVCODE_OUTPUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("accounting/calibrate.json").exists());
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = path(tmp.path());

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "seed = 1\n[optimizer]\nbatch_size = \"x\"\n").unwrap();
    let out = privcode(&["--config", path(&bad), "account", "--rho", "1", "--q", "0.1", "--steps", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("optimizer.batch_size"));

    let out = privcode(&["train", "--model", "laat-small", "--rho", "1", "--target-epsilon", "3", "--output-dir", dir]);
    assert_eq!(out.status.code(), Some(2));

    let out = privcode(&[
        "calibrate", "--target-epsilon", "1e-4", "--q", "1", "--steps", "1000000", "--delta", "1e-9",
        "--output-dir", dir,
    ]);
    assert_eq!(out.status.code(), Some(3));

    let out = privcode(&["evaluate", "--model", "laat-small", "--output-dir", dir]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn stage_commands_chain_through_the_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let out_dir = tmp.path().join("out");
    let common = ["--config", path(&cfg), "--output-dir", path(&out_dir)];
    let run = |args: &[&str]| {
        let all: Vec<&str> = common.iter().copied().chain(args.iter().copied()).collect();
        let out = privcode(&all);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };

    run(&["generate-data"]);
    assert!(out_dir.join("raw/records.jsonl").exists());
    run(&["preprocess"]);
    assert!(out_dir.join("data/labels.txt").exists());
    run(&["train", "--model", "m", "--non-private"]);
    run(&["train", "--model", "m"]);
    let run_json: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("runs/m-dp/run.json")).unwrap()).unwrap();
    assert!(run_json["epsilon"]["prv"].as_f64().unwrap() <= 8.0);
    run(&["evaluate", "--model", "m", "--non-private"]);
    run(&["audit-fairness", "--model", "m", "--non-private"]);
    assert!(out_dir.join("runs/m-nondp/fairness/fairness.json").exists());

    let preds = out_dir.join("runs/m-nondp/evaluation/predictions.jsonl");
    let audit_dir = tmp.path().join("audit");
    run(&["audit-fairness", "--predictions", path(&preds), "--out", path(&audit_dir)]);
    assert_eq!(
        fs::read(audit_dir.join("fairness.json")).unwrap(),
        fs::read(out_dir.join("runs/m-nondp/fairness/fairness.json")).unwrap()
    );
}
