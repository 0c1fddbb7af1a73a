use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fisherseg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fisherseg"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &str = r#"
seed = 3

[scene]
height = 32
width = 32

[split]
train = 8
eval = 4

[train]
epochs = 1
batch_size = 4
eval_every = 1
probe_size = 2
eval_batch_size = 4
"#;

#[test]
fn invalid_class_count_fails_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[scene]\nclasses = 0\n").unwrap();
    let out = fisherseg(dir.path(), &["generate", "--config", "bad.toml"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: ") && err.contains("classes"), "{err}");
    assert!(!dir.path().join("data").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[scene]\nhieght = 32\n").unwrap();
    let out = fisherseg(dir.path(), &["generate", "--config", "bad.toml"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("hieght"), "{}", stderr(&out));
}

#[test]
fn missing_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = fisherseg(dir.path(), &["train", "--data", "nowhere"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("nowhere"), "{}", stderr(&out));

    let out = fisherseg(dir.path(), &["eval", "--checkpoint", "none.ckpt", "--data", "."]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("none.ckpt"), "{}", stderr(&out));

    let out = fisherseg(dir.path(), &["sweep", "--axis", "lambda_q"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("lambda_q"), "{}", stderr(&out));

    let out = fisherseg(dir.path(), &["plotdata"]);
    assert!(!out.status.success());
}

#[test]
fn end_to_end_flow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("tiny.toml"), TINY).unwrap();

    let out = fisherseg(d, &["generate", "--config", "tiny.toml"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("sha256"));
    assert!(d.join("data/train/manifest.json").exists() && d.join("data/eval/manifest.json").exists());

    let out = fisherseg(d, &["train", "--config", "tiny.toml", "--out", "run"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = stdout(&out);
    assert!(table.contains("PRE") && table.contains("mean"), "{table}");

    let out = fisherseg(d, &["eval", "--checkpoint", "run/model.ckpt", "--data", "data/eval", "--out", "tables"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(table.starts_with(&stdout(&out)), "eval table differs from the training one");
    assert!(d.join("tables/eval.csv").exists());

    let out = fisherseg(d, &[
        "eval",
        "--checkpoint",
        "run/model.ckpt",
        "--data",
        "data/eval",
        "--modalities",
        "photo,range",
        "--out",
        "tables",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(!stdout(&out).contains("edge"));

    let out = fisherseg(d, &[
        "sweep",
        "--config",
        "tiny.toml",
        "--axis",
        "lambda_f",
        "--values",
        "0,0.04",
        "--out",
        "sw",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(d.join("sw/sweep_lambda_f.txt")).unwrap().lines().count(), 3);

    let out = fisherseg(d, &["plotdata", "run/metrics.jsonl", "sw/lambda_f=0.04/metrics.jsonl"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let miou = fs::read_to_string(d.join("plots/miou.csv")).unwrap();
    assert!(miou.lines().next().unwrap().contains("lambda_f=0.04:mean"));
}
