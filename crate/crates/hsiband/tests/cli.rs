//! Exercise the installed binary end to end against synthetic dataset files.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{four_class_scene, write_dataset};

fn hsiband() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hsiband"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

struct Fixture {
    _dir: tempfile::TempDir,
    cube: std::path::PathBuf,
    gt: std::path::PathBuf,
    out: std::path::PathBuf,
}

fn fixture(seed: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let scene = four_class_scene(seed);
    let (cube, gt) = write_dataset(dir.path(), &scene);
    let out = dir.path().join("out");
    Fixture {
        _dir: dir,
        cube,
        gt,
        out,
    }
}

fn data_flags(f: &Fixture, cmd: &mut Command, levels: &str) {
    cmd.arg("--cube")
        .arg(&f.cube)
        .arg("--gt")
        .arg(&f.gt)
        .arg("--levels")
        .arg(levels)
        .arg("--out")
        .arg(&f.out);
}

#[test]
fn rank_writes_one_row_per_band() {
    let f = fixture(1);
    let mut cmd = hsiband();
    cmd.arg("rank");
    data_flags(&f, &mut cmd, "8");
    run_ok(&mut cmd);
    let text = std::fs::read_to_string(f.out.join("rank.csv")).unwrap();
    assert_eq!(text.lines().count(), 6);

    // Different level count: same row contract, different scores.
    let mut cmd = hsiband();
    cmd.arg("rank");
    data_flags(&f, &mut cmd, "2");
    run_ok(&mut cmd);
    let text2 = std::fs::read_to_string(f.out.join("rank.csv")).unwrap();
    assert_eq!(text2.lines().count(), 6);
    assert_ne!(text, text2);
}

#[test]
fn missing_required_flag_is_usage_error() {
    let f = fixture(2);
    let out = hsiband()
        .arg("rank")
        .arg("--cube")
        .arg(&f.cube)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--gt"), "stderr: {stderr}");
    assert_eq!(stderr.lines().count(), 1);
}

#[test]
fn unreadable_cube_is_runtime_error() {
    let f = fixture(3);
    let out = hsiband()
        .arg("rank")
        .arg("--cube")
        .arg("/nonexistent/cube.raw")
        .arg("--gt")
        .arg(&f.gt)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn select_ig_writes_top_bands() {
    let f = fixture(4);
    let mut cmd = hsiband();
    cmd.arg("select");
    data_flags(&f, &mut cmd, "8");
    cmd.args(["--method", "ig", "--max-bands", "3"]);
    let out = run_ok(&mut cmd);
    assert!(String::from_utf8_lossy(&out.stdout).contains("retained 3 bands"));
    let retained = std::fs::read_to_string(f.out.join("retained.txt")).unwrap();
    let bands: Vec<usize> = retained.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(bands.len(), 3);

    // Must equal the top of the rank listing.
    let rank = std::fs::read_to_string(f.out.join("rank.csv"));
    let rank = match rank {
        Ok(r) => r,
        Err(_) => {
            let mut cmd = hsiband();
            cmd.arg("rank");
            data_flags(&f, &mut cmd, "8");
            run_ok(&mut cmd);
            std::fs::read_to_string(f.out.join("rank.csv")).unwrap()
        }
    };
    let top: Vec<usize> = rank
        .lines()
        .take(3)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(bands, top);
}

#[test]
fn select_hybrid_respects_cap_and_is_deterministic() {
    let f = fixture(5);
    let run = || {
        let mut cmd = hsiband();
        cmd.arg("select");
        data_flags(&f, &mut cmd, "8");
        cmd.args([
            "--method",
            "hybrid",
            "--th",
            "-0.05",
            "--max-bands",
            "2",
            "--stage1-keep",
            "4",
            "--seed",
            "9",
        ]);
        run_ok(&mut cmd);
        (
            std::fs::read_to_string(f.out.join("trace.csv")).unwrap(),
            std::fs::read_to_string(f.out.join("retained.txt")).unwrap(),
        )
    };
    let (trace1, retained1) = run();
    let (trace2, retained2) = run();
    assert_eq!(trace1, trace2);
    assert_eq!(retained1, retained2);
    assert!(retained1.lines().count() <= 2);
    let accepted = trace1
        .lines()
        .filter(|l| !l.starts_with('#') && l.ends_with(",1"))
        .count();
    assert!(accepted <= 2);
}

#[test]
fn table_outputs_are_byte_stable() {
    let f = fixture(6);
    let run = || {
        let mut cmd = hsiband();
        cmd.arg("table");
        data_flags(&f, &mut cmd, "8");
        cmd.args([
            "--method",
            "mi-filter",
            "--thresholds",
            "-0.05,-0.2",
            "--band-counts",
            "1,2,3",
            "--repeats",
            "2",
            "--base-seed",
            "7",
            "--max-bands",
            "3",
        ]);
        run_ok(&mut cmd);
        (
            std::fs::read_to_string(f.out.join("table.csv")).unwrap(),
            std::fs::read_to_string(f.out.join("table.md")).unwrap(),
            std::fs::read_to_string(f.out.join("runs.jsonl")).unwrap(),
        )
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    // Two threshold columns in the CSV header row.
    let header = a.0.lines().nth(1).unwrap();
    assert_eq!(header, "bands,-0.05,-0.2");
    assert!(a.2.lines().count() > 0);
}

#[test]
fn from_trace_replay_matches_fresh_table() {
    let f = fixture(7);
    let mut cmd = hsiband();
    cmd.arg("select");
    data_flags(&f, &mut cmd, "8");
    cmd.args([
        "--method",
        "hybrid",
        "--th",
        "-0.05",
        "--max-bands",
        "3",
        "--stage1-keep",
        "5",
        "--seed",
        "11",
    ]);
    run_ok(&mut cmd);
    let trace_path = f.out.join("trace.csv");

    let table_flags = |cmd: &mut Command, out: &Path| {
        cmd.arg("--cube")
            .arg(&f.cube)
            .arg("--gt")
            .arg(&f.gt)
            .arg("--levels")
            .arg("8")
            .arg("--out")
            .arg(out);
    };
    let replay_out = f.out.join("replay");
    let mut cmd = hsiband();
    cmd.arg("table");
    table_flags(&mut cmd, &replay_out);
    cmd.arg("--from-trace").arg(&trace_path);
    cmd.args(["--band-counts", "1,2"]);
    run_ok(&mut cmd);

    let fresh_out = f.out.join("fresh");
    let mut cmd = hsiband();
    cmd.arg("table");
    table_flags(&mut cmd, &fresh_out);
    cmd.args([
        "--method",
        "hybrid",
        "--thresholds",
        "-0.05",
        "--band-counts",
        "1,2",
        "--repeats",
        "1",
        "--base-seed",
        "11",
        "--max-bands",
        "3",
        "--stage1-keep",
        "5",
    ]);
    run_ok(&mut cmd);

    let replayed = std::fs::read_to_string(replay_out.join("table.csv")).unwrap();
    let fresh = std::fs::read_to_string(fresh_out.join("table.csv")).unwrap();
    assert_eq!(replayed, fresh);
}

#[test]
fn evaluate_prints_accuracy_and_exports_artifacts() {
    let f = fixture(8);
    let split_path = f._dir.path().join("split.csv");
    let model_path = f._dir.path().join("model.txt");
    let mut cmd = hsiband();
    cmd.arg("evaluate");
    cmd.arg("--cube")
        .arg(&f.cube)
        .arg("--gt")
        .arg(&f.gt)
        .arg("--levels")
        .arg("8");
    cmd.args(["--bands", "0,1", "--seed", "3", "--grid-search"]);
    cmd.arg("--export-split").arg(&split_path);
    cmd.arg("--save-model").arg(&model_path);
    let out = run_ok(&mut cmd);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("overall="), "stdout: {stdout}");
    assert!(stdout.contains("grid search picked"), "stdout: {stdout}");

    let split_text = std::fs::read_to_string(&split_path).unwrap();
    assert_eq!(split_text.lines().count(), 12);
    let model = hsiband::classifier::load_model(Path::new(&model_path)).unwrap();
    assert_eq!(model.band_subset, vec![0, 1]);
    assert_eq!(model.levels, 8);
}

#[test]
fn config_file_merges_under_cli_flags() {
    let f = fixture(9);
    let config_path = f._dir.path().join("run.conf");
    std::fs::write(
        &config_path,
        format!(
            "cube={}\ngt={}\nlevels=8\nout={}\n",
            f.cube.display(),
            f.gt.display(),
            f.out.display()
        ),
    )
    .unwrap();
    // All data flags come from the config file.
    let mut cmd = hsiband();
    cmd.arg("rank").arg("--config").arg(&config_path);
    run_ok(&mut cmd);
    let from_config = std::fs::read_to_string(f.out.join("rank.csv")).unwrap();

    // A CLI flag overrides the config value.
    let mut cmd = hsiband();
    cmd.arg("rank")
        .arg("--config")
        .arg(&config_path)
        .arg("--levels")
        .arg("2");
    run_ok(&mut cmd);
    let overridden = std::fs::read_to_string(f.out.join("rank.csv")).unwrap();
    assert_ne!(from_config, overridden);
}
