use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
teachers = 2
strategies = ["hard", "soft"]
k = 2

[data]
kind = "mixture"
classes = 4
feature_dim = 4
separation = 5.0
spread = 1.0
train_per_class = 30
test_per_class = 10

[teacher]
epochs = 2

[student]
epochs = 2
eval_every = 10

[seeds]
students = [0]
"#;

fn muki(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_muki"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn muki")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_report_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("run");
    let o = muki(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("report.json").exists());
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("method,seed,accuracy"));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("hard") && stdout.contains("soft"), "{stdout}");
}

#[test]
fn staged_subcommands_reach_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("staged");
    let out = out.to_str().unwrap();
    for stage in ["gen-data", "train-teachers", "integrate", "train-student", "evaluate"] {
        let o = muki(&[
            stage,
            "--config",
            &cfg,
            "--out",
            out,
            "--strategy",
            "soft",
            "--tau",
            "0.5",
        ]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(Path::new(out).join("caches/soft.jsonl").exists());
    assert!(!Path::new(out).join("caches/hard.jsonl").exists());
    let o = muki(&["analyze", "--config", &cfg, "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(Path::new(out).join("diagnostics.json").exists());
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("k = 2", "k = 0"));
    let o = muki(&["run", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());

    let o = muki(&["run", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert!(!o.status.success());

    let cfg = write_config(dir.path(), TINY);
    let o = muki(&[
        "integrate",
        "--config",
        &cfg,
        "--out",
        dir.path().join("empty").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("integrate"));
}
