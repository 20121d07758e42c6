// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_concept-circuits"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const TINY: &str = r#"
workers = 1

[data]
max_concepts = 12
resamples = 3
test_concepts = 4
templates_per_relation = 10
bio_people = 5

[model]
n_layers = 1
n_heads = 2
d_model = 8
d_mlp = 16
context_len = 32

[stage1]
lr = 0.01
batch_size = 8
steps = 4
checkpoint_every = 2
seed = 1
probe_size = 4

[stage2]
lr = 0.01
batch_size = 8
steps = 4
checkpoint_every = 2
seed = 2
probe_size = 4

[analysis]
k = 3
seeds = [0]

[interference]
targets = 4
groups = ["high", "weak"]

[interference.train]
steps = 2
batch_size = 4

[transfer.train]
steps = 1
batch_size = 4
"#;

fn tiny_config(dir: &Path) -> String {
    let out = dir.join("run");
    let text = format!("out_dir = {:?}\n{TINY}", out.to_string_lossy());
    let path = dir.join("tiny.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["no-such-command"])), 1);
    assert_eq!(code(&run(&["train", "--stage", "3"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn validation_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[circuit]\nthreshold = 1.5\n\n[analysis]\nk = 100\n\n[data]\nmax_concepts = 50\n").unwrap();
    let o = run(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("circuit.threshold"), "{err}");
    assert!(err.contains("analysis.k, data.max_concepts"), "{err}");
    let o = run(&["pipeline", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn runtime_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&run(&["validate", "--config", missing.to_str().unwrap()])), 2);
    let garbled = dir.path().join("garbled.toml");
    std::fs::write(&garbled, "[model\n").unwrap();
    assert_eq!(code(&run(&["validate", "--config", garbled.to_str().unwrap()])), 2);
    let o = run(&["metrics", "--circuits", dir.path().join("nowhere").to_str().unwrap(), "--out", "x.csv"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn default_config_validates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("default.toml");
    let o = run(&["init-config", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let o = run(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn stepwise_commands_produce_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    let ok = |args: &[&str]| {
        let o = run(args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8_lossy(&o.stdout).into_owned()
    };

    ok(&["gen-data", "--config", &cfg, "--out", &p("data")]);
    assert!(dir.path().join("data/dataset.json").exists());
    ok(&["train", "--config", &cfg, "--data", &p("data"), "--stage", "1", "--out", &p("s1")]);
    let pi0 = p("s1/stage1-step-000000.ckpt");
    let pi1 = p("s1/stage1-step-000004.ckpt");
    ok(&["train", "--config", &cfg, "--data", &p("data"), "--stage", "2", "--init", &pi1, "--out", &p("s2")]);
    let pi2 = p("s2/stage2-step-000004.ckpt");
    ok(&["extract", "--config", &cfg, "--data", &p("data"), "--checkpoint", &pi1, "--label", "pi1", "--out", &p("c1")]);
    ok(&["extract", "--config", &cfg, "--data", &p("data"), "--checkpoint", &pi2, "--label", "pi2", "--out", &p("c2")]);
    let out = ok(&["metrics", "--circuits", &p("c1"), "--out", &p("m1.csv")]);
    assert!(out.contains("4 rows"), "{out}");
    ok(&["metrics", "--circuits", &p("c2"), "--step", "4", "--out", &p("m2.csv")]);
    ok(&[
        "analyze", "degrees", "--data", &p("data"), "--before", &pi0, "--after", &pi1, "--kind", "learning", "--out",
        &p("deg.csv"),
    ]);
    let deg = std::fs::read_to_string(p("deg.csv")).unwrap();
    assert_eq!(deg.lines().count(), 5);
    let out = ok(&[
        "analyze", "correlate", "--degrees", &p("deg.csv"), "--metrics", &p("m1.csv"), "--checkpoint", "pi1", "--out",
        &p("corr.csv"),
    ]);
    assert_eq!(out.lines().count(), 4);

    // A combined metrics file spanning two stage-2 points.
    let m1 = std::fs::read_to_string(p("m1.csv")).unwrap();
    let m2 = std::fs::read_to_string(p("m2.csv")).unwrap();
    std::fs::write(p("all.csv"), format!("{m1}{}", m2.lines().skip(1).collect::<Vec<_>>().join("\n") + "\n")).unwrap();
    ok(&["analyze", "trajectory", "--metrics", &p("all.csv"), "--out", &p("traj")]);
    assert!(dir.path().join("traj/trajectories.csv").exists());

    let out = ok(&["interference", "--config", &cfg, "--out", &p("intf")]);
    assert_eq!(out.lines().count(), 2);
    let out = ok(&["transfer", "--config", &cfg, "--steps", "1", "--out", &p("tr")]);
    assert_eq!(out.lines().count(), 20);
    let rows = std::fs::read_to_string(p("tr/transfer_matrix.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 25);
}

#[test]
fn pipeline_command_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("elsewhere");
    let o = run(&["pipeline", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("manifest.json").exists());
    assert!(!dir.path().join("run").exists());
}
