use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semfl::commands::{AttackOutput, RunSummary};
use semfl_core::fed::RoundRecord;
use semfl_core::model::Provenance;

const BASE: &str = r#"
seed = 11

[dataset]
height = 16
width = 16
count = 20

[model]
depth = 2
base_channels = 2

[training]
learning_rate = 0.1
batch_size = 2
rounds = 2
snapshot_rounds = [0]
runs = [
  { id = "cl-a", mode = "cl", subsets = ["A"] },
  { id = "fl-1", mode = "fl", subsets = ["A"] },
  { id = "fl-3", mode = "fl", subsets = ["A", "B", "C"], sample_cap = 1 },
]

[attack]
run = "fl-3"
victim = "client-2"
round = 0
alphas = [0.0, 1.0]

[attack.settings]
iterations = 20
snapshot_every = 5
"#;

fn semfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semfl")).args(args).output().expect("spawn semfl")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn setup(dir: &Path, text: &str) -> (PathBuf, String) {
    let cfg = dir.join("exp.toml");
    fs::write(&cfg, text).unwrap();
    let out = dir.join("out");
    (cfg, out.to_string_lossy().into_owned())
}

fn run_ok(args: &[&str]) -> Output {
    let o = semfl(args);
    assert_eq!(code(&o), 0, "{args:?}\nstdout: {}\nstderr: {}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    o
}

fn records(path: &Path) -> Vec<RoundRecord> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn generate_is_deterministic_and_desk_scale_shrinks_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = setup(dir.path(), BASE);
    let cfg = cfg.to_str().unwrap();
    run_ok(&["generate", "--config", cfg, "--out", &out]);
    let first = fs::read(Path::new(&out).join("dataset/manifest.json")).unwrap();
    run_ok(&["generate", "--config", cfg, "--out", &out]);
    assert_eq!(first, fs::read(Path::new(&out).join("dataset/manifest.json")).unwrap());

    let desk = dir.path().join("desk");
    run_ok(&["generate", "--config", cfg, "--out", desk.to_str().unwrap(), "--desk-scale"]);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(desk.join("dataset/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["height"], 64);
    assert_eq!(m["samples"].as_array().unwrap().len(), 40);
    assert!(desk.join("dataset/A/sem-0000.png").exists());
}

#[test]
fn train_attack_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = setup(dir.path(), BASE);
    let cfg = cfg.to_str().unwrap();
    let outp = Path::new(&out);

    // training before generation is a missing-input error
    assert_eq!(code(&semfl(&["train", "--config", cfg, "--out", &out])), 3);
    run_ok(&["generate", "--config", cfg, "--out", &out]);
    run_ok(&["train", "--config", cfg, "--out", &out]);

    let cl = records(&outp.join("runs/cl-a/rounds.jsonl"));
    let fl = records(&outp.join("runs/fl-1/rounds.jsonl"));
    assert_eq!(cl.len(), 2);
    for (a, b) in cl.iter().zip(&fl) {
        assert_eq!(a.holdout, b.holdout);
        assert_eq!(a.aggregate_digest, b.aggregate_digest);
    }
    let summary: RunSummary = serde_json::from_str(&fs::read_to_string(outp.join("runs/fl-3/run.json")).unwrap()).unwrap();
    assert_eq!(summary.clients, vec!["client-1", "client-2", "client-3"]);
    assert!(outp.join("runs/fl-3/snapshots/round-0000/client-2.weights").exists());
    assert!(outp.join("results.csv").exists());

    // rerunning reproduces everything but wall-clock fields
    let before: Vec<RoundRecord> = records(&outp.join("runs/fl-3/rounds.jsonl"));
    run_ok(&["train", "--config", cfg, "--out", &out, "--run", "fl-3"]);
    let after: Vec<RoundRecord> = records(&outp.join("runs/fl-3/rounds.jsonl"));
    assert_eq!(
        before.iter().map(RoundRecord::without_timing).collect::<Vec<_>>(),
        after.iter().map(RoundRecord::without_timing).collect::<Vec<_>>()
    );

    run_ok(&["attack", "--config", cfg, "--out", &out]);
    let adir = outp.join("attack/fl-3-client-2-r0");
    let report: AttackOutput = serde_json::from_str(&fs::read_to_string(adir.join("report.json")).unwrap()).unwrap();
    assert!(report.gate.passed);
    assert_eq!(report.reports.len(), 2);
    assert_eq!(report.reports[0].target_provenance, Provenance::Recovered);
    assert!(report.reports[0].metrics.is_some());
    for f in ["recon.png", "mask.png", "filmstrip.png", "original.png"] {
        assert!(adir.join(f).exists(), "{f}");
    }

    let rep = run_ok(&["report", &out]);
    assert!(String::from_utf8_lossy(&rep.stdout).contains("3 run(s)"));
    for f in ["summary.csv", "summary.md", "test_iou.svg", "test_loss.png", "attacks.csv", "montage.png"] {
        assert!(outp.join("report").join(f).exists(), "{f}");
    }

    // fault injection: one corrupted line in a round log
    let log = outp.join("runs/cl-a/rounds.jsonl");
    let mut text = fs::read_to_string(&log).unwrap();
    text.insert_str(0, "{\"round\": oops\n");
    fs::write(&log, text).unwrap();
    let partial = semfl(&["report", &out]);
    assert_eq!(code(&partial), 5);
    assert!(String::from_utf8_lossy(&partial.stderr).contains("skipped malformed record"));
    assert!(outp.join("report/summary.csv").exists());
}

#[test]
fn attack_refuses_inexact_updates_unless_approximate() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE.replace("rounds = 2", "rounds = 1\noptimizer = \"sgd_momentum\"");
    let (cfg, out) = setup(dir.path(), &text);
    let cfg = cfg.to_str().unwrap();
    run_ok(&["generate", "--config", cfg, "--out", &out]);
    run_ok(&["train", "--config", cfg, "--out", &out, "--run", "fl-3"]);
    let refused = semfl(&["attack", "--config", cfg, "--out", &out]);
    assert_eq!(code(&refused), 2);
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--approximate"));
    run_ok(&["attack", "--config", cfg, "--out", &out, "--approximate"]);
    let report: AttackOutput =
        serde_json::from_str(&fs::read_to_string(Path::new(&out).join("attack/fl-3-client-2-r0/report.json")).unwrap()).unwrap();
    assert!(report.reports.iter().all(|r| r.target_provenance == Provenance::Approximate));
}

#[test]
fn attack_without_snapshots_is_a_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = setup(dir.path(), BASE);
    let cfg = cfg.to_str().unwrap();
    run_ok(&["generate", "--config", cfg, "--out", &out]);
    let o = semfl(&["attack", "--config", cfg, "--out", &out]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing snapshots"));
}

#[test]
fn configuration_errors_have_their_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = setup(dir.path(), &BASE.replace("victim = \"client-2\"", "victim = \"client-9\""));
    assert_eq!(code(&semfl(&["generate", "--config", cfg.to_str().unwrap(), "--out", &out])), 2);
    let (cfg, _) = setup(dir.path(), &format!("{BASE}\ntypo = 1\n"));
    assert_eq!(code(&semfl(&["generate", "--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(code(&semfl(&["generate", "--config", dir.path().join("nope.toml").to_str().unwrap()])), 3);
    assert_eq!(code(&semfl(&["report", dir.path().join("empty").to_str().unwrap()])), 3);
}

#[test]
fn evaluate_compares_image_files() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = setup(dir.path(), BASE);
    run_ok(&["generate", "--config", cfg.to_str().unwrap(), "--out", &out]);
    let img = format!("{out}/dataset/A/sem-0000.png");
    let other = format!("{out}/dataset/A/sem-0001.png");
    let mask = format!("{out}/dataset/A/sem-0000_mask.png");

    let same: serde_json::Value = serde_json::from_slice(&run_ok(&["evaluate", &img, &img]).stdout).unwrap();
    assert_eq!(same["mse"], 0.0);
    assert_eq!(same["psnr"], "inf");
    assert_eq!(same["ssim"], 1.0);

    let recon: serde_json::Value = serde_json::from_slice(&run_ok(&["evaluate", &other, &img, "--mask", &mask]).stdout).unwrap();
    assert_eq!(recon["preprocessing"], "unsupervised_resegmentation");

    let seg: serde_json::Value = serde_json::from_slice(&run_ok(&["evaluate", &mask, &img, "--mask", &mask, "--segmentation"]).stdout).unwrap();
    assert_eq!(seg["iou"], 1.0);
    assert_eq!(code(&semfl(&["evaluate", &img, "missing.png"])), 3);
}
