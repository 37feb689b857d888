use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dinocount::fsc147::{Fsc147Index, ANNOTATIONS_FILE};
use dinocount_core::sample::SampleSource;
use dinocount_core::Split;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dinocount"))
}

fn desk() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &[
    "--set",
    "model.input_side=56",
    "--set",
    "model.encoder.embed_dim=8",
    "--set",
    "model.decoder.stage_channels=[8,8,4,2]",
    "--set",
    "pipeline.resize_side=56",
    "--set",
    "inference.window=56",
    "--set",
    "inference.stride=28",
    "--set",
    "train.epochs=2",
    "--set",
    "train.eval_every=1",
    "--set",
    "train.batch_size=2",
];

#[test]
fn help_for_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    for sub in ["prepare", "synth", "train", "evaluate", "count", "visualize"] {
        let o = run(&[sub, "--help"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(stdout(&o).contains("Usage"), "{sub}");
    }
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["count"], dir.path()).status.code(), Some(1));
}

#[test]
fn synth_glasses_are_counted_once() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["synth", "--kind", "two-lens-glasses", "--count", "5", "--height", "96", "--width", "128", "--out", "g"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let idx = Fsc147Index::open(&dir.path().join("g"), Split::Train).unwrap();
    assert_eq!(idx.gt_count(0), 5);
}

#[test]
fn bad_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let c = desk();
    let cfg = c.to_str().unwrap();
    let o = run(&["--config", cfg, "--set", "train.nonsense=1", "train"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nonsense"), "{}", stderr(&o));

    let o = run(&["count", "--image", "missing.png", "--checkpoint", "missing.safetensors"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing"), "{}", stderr(&o));

    let o = run(&["--config", cfg, "train", "--data", "nowhere"], dir.path());
    assert_eq!(o.status.code(), Some(1));

    let o = run(&["synth", "--kind", "hexagon", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_evaluate_count_visualize() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let o = run(
        &[
            "synth", "--count", "3..8", "--scenes", "4", "--val-scenes", "2", "--test-scenes", "2", "--height", "56",
            "--width", "84", "--out", "data",
        ],
        cwd,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let c = desk();
    let mut args: Vec<&str> = vec!["--config", c.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["train", "--data", "data", "--name", "t"]);
    let o = run(&args, cwd);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run_dir = cwd.join("run/t");
    for f in ["best.safetensors", "curve.csv", "config.toml", "checkpoints/epoch_1.safetensors", "checkpoints/epoch_2.safetensors"] {
        assert!(run_dir.join(f).is_file(), "{f}");
    }
    let curve = std::fs::read_to_string(run_dir.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("epoch,train_loss,val_mae,val_rmse"));
    assert_eq!(curve.lines().count(), 3);

    let best = run_dir.join("best.safetensors");
    let best = best.to_str().unwrap();
    let o = run(
        &[
            "evaluate", "--checkpoint", best, "--split", "test", "--data", "data", "--exclude-top-k", "1", "--report",
            "out/report.json", "--table", "out/table.txt",
        ],
        cwd,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(cwd.join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
    assert_eq!(report["aggregates"]["excluded"]["n"], 1);
    assert_eq!(report["aggregates"]["excluded_ids"].as_array().unwrap().len(), 1);
    let table = std::fs::read_to_string(cwd.join("out/table.txt")).unwrap();
    assert!(table.contains("Without exclusions") && table.contains("Excluding 1 image\n") || table.contains("Excluding 1 image "), "{table}");
    let csv = std::fs::read_to_string(cwd.join("out/table.csv")).unwrap();
    assert!(csv.starts_with("label,val_mae,val_rmse,test_mae,test_rmse"));

    let test = Fsc147Index::open(&cwd.join("data"), Split::Test).unwrap();
    let img = test.image_path(0);
    let img = img.to_str().unwrap();
    let o = run(
        &["count", "--image", img, "--checkpoint", best, "--density", "out/d.png", "--overlay", "out/o.png"],
        cwd,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let n: i64 = stdout(&o).trim().parse().unwrap();
    assert!(n >= 0);
    assert!(cwd.join("out/d.txt").is_file() && cwd.join("out/o.png").is_file());

    let o = run(&["visualize", "--image", img, "--density", "out/d.png", "--out", "out/v.png"], cwd);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(cwd.join("out/v.png").is_file());

    // same checkpoint and inputs give the same report
    let o = run(&["evaluate", "--checkpoint", best, "--split", "test", "--data", "data", "--exclude-top-k", "1", "--report", "out/again.json"], cwd);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(cwd.join("out/report.json")).unwrap(), std::fs::read(cwd.join("out/again.json")).unwrap());

    // a corrupted annotation turns into a failed row and exit code 2
    let ann_path = cwd.join("data").join(ANNOTATIONS_FILE);
    let mut ann: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&ann_path).unwrap()).unwrap();
    ann[test.id(1)]["points"][0] = serde_json::json!([1e6, 0.0]);
    std::fs::write(&ann_path, ann.to_string()).unwrap();
    let o = run(&["evaluate", "--checkpoint", best, "--split", "test", "--data", "data", "--report", "out/bad.json"], cwd);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let bad: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(cwd.join("out/bad.json")).unwrap()).unwrap();
    assert_eq!(bad["aggregates"]["failures"], 1);
}
