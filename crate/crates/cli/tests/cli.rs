use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_facetbandit"));
    cmd.env_remove("FACETBANDIT_OUTPUT_ROOT");
    cmd
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn run_writes_outputs_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "run",
            "--steps",
            "120",
            "--replicas",
            "2",
            "--output-dir",
            "r",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "config.toml",
        "summary.json",
        "summary.csv",
        "replica_000.jsonl",
        "replica_001.jsonl",
    ] {
        assert!(dir.path().join("r").join(f).exists(), "{f} missing");
    }
    let log = fs::read_to_string(dir.path().join("r/replica_001.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 120);
}

#[test]
fn flags_override_config_file_in_both_spellings() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("exp.toml"),
        "steps = 5000\nscheduler = \"mixed\"\noutput_dir = \"from-file\"\n",
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &[
            "run",
            "-c",
            "exp.toml",
            "--steps",
            "50",
            "--output_dir",
            "flagged",
            "--eval-every",
            "10",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stored = fs::read_to_string(dir.path().join("flagged/config.toml")).unwrap();
    assert!(stored.contains("steps = 50"));
    assert!(stored.contains("scheduler = \"mixed\""));
    assert!(stored.contains("eval_every = 10"));
    assert!(!dir.path().join("from-file").exists());
}

#[test]
fn output_root_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    let out = bin()
        .current_dir(dir.path())
        .env("FACETBANDIT_OUTPUT_ROOT", &root)
        .args(["run", "--steps", "20", "--output-dir", "x"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(root.join("x/summary.json").exists());
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_in(dir.path(), &["run", "--stepz", "3"])), 1);
    assert_eq!(code(&run_in(dir.path(), &["run", "--gamma", "1.5"])), 1);
    assert_eq!(
        code(&run_in(dir.path(), &["run", "--scheduler", "greedy"])),
        1
    );
    assert_eq!(code(&run_in(dir.path(), &["run", "--reward", "bleu"])), 1);
    assert_eq!(code(&run_in(dir.path(), &["run", "-c", "missing.toml"])), 1);
    fs::write(dir.path().join("bad.toml"), "unknown_key = 1\n").unwrap();
    assert_eq!(code(&run_in(dir.path(), &["run", "-c", "bad.toml"])), 1);
    assert_eq!(code(&run_in(dir.path(), &["--help"])), 0);
}

#[test]
fn diverging_run_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("hot.toml"),
        "steps = 400\nreward = \"pg\"\noutput_dir = \"hot\"\n[task]\nkind = \"surrogate\"\nsgd_lr = 50.0\n",
    )
    .unwrap();
    let out = run_in(dir.path(), &["run", "-c", "hot.toml"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stdout));
    let summary = fs::read_to_string(dir.path().join("hot/summary.json")).unwrap();
    assert!(summary.contains("aborted"));
}

#[test]
fn sweep_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "sweep",
            "--steps",
            "100",
            "--learning-rates",
            "0.01,0.1",
            "--exploration-rates",
            "0.2,0.5",
            "--output-dir",
            "sw",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);

    let out = run_in(
        dir.path(),
        &[
            "report",
            "sw/lr0.01_gamma0.2",
            "sw/lr0.1_gamma0.5",
            "--out",
            "rep",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let agg = fs::read_to_string(dir.path().join("rep/aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 3);
}

#[test]
fn regret_mode_and_incompatible_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "regret",
            "--steps",
            "2000",
            "--arms",
            "4",
            "--mu",
            "0.01",
            "--output-dir",
            "reg",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean regret"));
    let out = run_in(dir.path(), &["run", "--steps", "30", "--output-dir", "cur"]);
    assert_eq!(code(&out), 0);
    let out = run_in(dir.path(), &["report", "reg", "cur", "--out", "rep"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn tau_flag_selects_static_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["run", "--tau", "-1", "--steps", "30", "--output-dir", "t"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stored = fs::read_to_string(dir.path().join("t/config.toml")).unwrap();
    assert!(stored.contains("inverse-proportional"));
    let both = run_in(dir.path(), &["run", "--tau", "2", "--scheduler", "exp3"]);
    assert_eq!(code(&both), 1);
}
