//! End-to-end tests of the command-line interface: artifacts, exit
//! codes, and byte-level reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_grada"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// All files under a directory with their bytes, path-sorted.
fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        for entry in std::fs::read_dir(&current).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn gen_small(dir: &Path, name: &str, seed: u64, shift: &str) -> PathBuf {
    let data = dir.join(name);
    run_ok(&[
        "gen-data",
        "--out",
        data.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--per-class",
        "4",
        "--size",
        "8",
        "--shift",
        shift,
    ]);
    data
}

#[test]
fn gen_data_defaults_and_byte_identical_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let stdout = run_ok(&["gen-data", "--out", data.to_str().unwrap(), "--seed", "5", "--per-class", "4", "--size", "8"]);
    assert!(stdout.contains("domain0") && stdout.contains("domain3"), "{stdout}");

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["num_domains"], 4);
    assert_eq!(meta["num_classes"], 7);
    assert_eq!(meta["shift_preset"], "default");

    let first = tree_bytes(&data);
    run_ok(&["gen-data", "--out", data.to_str().unwrap(), "--seed", "5", "--per-class", "4", "--size", "8", "--force"]);
    assert_eq!(first, tree_bytes(&data), "regenerated tree differs");
}

#[test]
fn gen_data_refuses_existing_output_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), "data", 1, "default");
    let out = run(&["gen-data", "--out", data.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));
}

#[test]
fn train_artifacts_reproducibility_and_manifest_replay() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), "data", 3, "default");
    let train = |out: &str, extra: &[&str]| {
        let out_dir = dir.path().join(out);
        let mut args = vec![
            "train",
            "--protocol",
            "da",
            "--data",
            data.to_str().unwrap(),
            "--out",
        ];
        let out_str = out_dir.to_str().unwrap().to_string();
        args.push(Box::leak(out_str.into_boxed_str()));
        args.extend_from_slice(&["--epochs", "2", "--seed", "9", "--batch-per-domain", "2"]);
        args.extend_from_slice(extra);
        run_ok(&args);
        out_dir
    };
    let a = train("run_a", &[]);
    let b = train("run_b", &[]);
    for artifact in ["metrics.csv", "checkpoint.grda"] {
        assert_eq!(
            std::fs::read(a.join(artifact)).unwrap(),
            std::fs::read(b.join(artifact)).unwrap(),
            "{artifact} differs between identical runs"
        );
    }
    assert!(a.join("manifest.json").exists());

    // Replaying the manifest reproduces the same bytes.
    let manifest = a.join("manifest.json");
    let c = dir.path().join("run_c");
    run_ok(&[
        "train",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read(a.join("metrics.csv")).unwrap(),
        std::fs::read(c.join("metrics.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("checkpoint.grda")).unwrap(),
        std::fs::read(c.join("checkpoint.grda")).unwrap()
    );
}

#[test]
fn train_zero_epochs_writes_initial_rows_only() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), "data", 4, "default");
    let out_dir = dir.path().join("run");
    run_ok(&[
        "train", "--protocol", "baseline", "--data", data.to_str().unwrap(),
        "--out", out_dir.to_str().unwrap(), "--epochs", "0", "--seed", "1",
    ]);
    let csv = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 4, "{csv}");
    assert!(lines[1..].iter().all(|l| l.starts_with("0,")));
}

#[test]
fn finetune_flag_combinations_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), "data", 5, "default");
    let out_dir = dir.path().join("run");
    let missing_ckpt = run(&[
        "train", "--protocol", "finetune", "--data", data.to_str().unwrap(),
        "--out", out_dir.to_str().unwrap(), "--domains", "1",
    ]);
    assert_eq!(exit_code(&missing_ckpt), 2);
    assert!(String::from_utf8_lossy(&missing_ckpt.stderr).contains("init-checkpoint"));

    let two_targets = run(&[
        "train", "--protocol", "finetune", "--data", data.to_str().unwrap(),
        "--out", out_dir.to_str().unwrap(), "--domains", "1,2",
        "--init-checkpoint", "whatever.grda",
    ]);
    assert_eq!(exit_code(&two_targets), 2);
}

#[test]
fn eval_reproduces_final_training_rows_and_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), "data", 6, "default");
    let out_dir = dir.path().join("run");
    run_ok(&[
        "train", "--protocol", "da", "--data", data.to_str().unwrap(),
        "--out", out_dir.to_str().unwrap(), "--epochs", "2", "--seed", "2",
        "--batch-per-domain", "2",
    ]);
    let eval_csv = dir.path().join("eval.csv");
    run_ok(&[
        "eval", "--checkpoint", out_dir.join("checkpoint.grda").to_str().unwrap(),
        "--data", data.to_str().unwrap(), "--out", eval_csv.to_str().unwrap(),
    ]);
    let train_csv = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let final_rows: Vec<&str> = train_csv.lines().filter(|l| l.starts_with("2,")).collect();
    assert_eq!(final_rows.len(), 4);
    let eval_text = std::fs::read_to_string(&eval_csv).unwrap();
    let eval_rows: Vec<&str> = eval_text.lines().skip(1).collect();
    assert_eq!(eval_rows.len(), 4, "one table row per domain");
    assert_eq!(final_rows, eval_rows, "eval must reproduce the final training rows");
}

#[test]
fn eval_errors_use_the_exit_code_contract() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), "data", 7, "default");

    // Missing required flag: usage error from the parser.
    let missing_flag = run(&["eval", "--data", data.to_str().unwrap()]);
    assert_eq!(exit_code(&missing_flag), 2);

    // Nonexistent checkpoint file: runtime failure.
    let missing_file = run(&[
        "eval", "--checkpoint", dir.path().join("nope.grda").to_str().unwrap(),
        "--data", data.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&missing_file), 1);
}

#[test]
fn eval_rejects_mismatched_checkpoint_and_data() {
    let dir = tempfile::tempdir().unwrap();
    let data8 = gen_small(dir.path(), "data8", 8, "default");
    let out_dir = dir.path().join("run");
    run_ok(&[
        "train", "--protocol", "baseline", "--data", data8.to_str().unwrap(),
        "--out", out_dir.to_str().unwrap(), "--epochs", "0", "--seed", "1",
    ]);
    let data16 = dir.path().join("data16");
    run_ok(&[
        "gen-data", "--out", data16.to_str().unwrap(), "--seed", "8",
        "--per-class", "4", "--size", "16",
    ]);
    let out = run(&[
        "eval", "--checkpoint", out_dir.join("checkpoint.grda").to_str().unwrap(),
        "--data", data16.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not fit"));
}

#[test]
fn project_rows_match_samples_and_rerun_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), "data", 9, "default");
    let out_dir = dir.path().join("run");
    run_ok(&[
        "train", "--protocol", "baseline", "--data", data.to_str().unwrap(),
        "--out", out_dir.to_str().unwrap(), "--epochs", "0", "--seed", "3",
    ]);
    let csv1 = dir.path().join("latent1.csv");
    let csv2 = dir.path().join("latent2.csv");
    for csv in [&csv1, &csv2] {
        run_ok(&[
            "project", "--checkpoint", out_dir.join("checkpoint.grda").to_str().unwrap(),
            "--data", data.to_str().unwrap(), "--out", csv.to_str().unwrap(),
        ]);
    }
    let text = std::fs::read_to_string(&csv1).unwrap();
    // 4 domains × 7 classes × 4 per class, plus the header.
    assert_eq!(text.lines().count(), 4 * 7 * 4 + 1);
    assert_eq!(std::fs::read(&csv1).unwrap(), std::fs::read(&csv2).unwrap());
}

#[test]
fn project_identity_shift_domains_are_not_separated() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    run_ok(&[
        "gen-data", "--out", data.to_str().unwrap(), "--seed", "10",
        "--per-class", "6", "--size", "8", "--shift", "identity",
    ]);
    let out_dir = dir.path().join("run");
    run_ok(&[
        "train", "--protocol", "baseline", "--data", data.to_str().unwrap(),
        "--out", out_dir.to_str().unwrap(), "--epochs", "0", "--seed", "4",
    ]);
    let csv = dir.path().join("latent.csv");
    run_ok(&[
        "project", "--checkpoint", out_dir.join("checkpoint.grda").to_str().unwrap(),
        "--data", data.to_str().unwrap(), "--out", csv.to_str().unwrap(),
    ]);

    // Leave-one-out 1-NN on the 2-D projection should predict domains at
    // roughly chance when every domain shares one distribution.
    let text = std::fs::read_to_string(&csv).unwrap();
    let points: Vec<(f64, f64, usize)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let parts: Vec<&str> = l.split(',').collect();
            (parts[0].parse().unwrap(), parts[1].parse().unwrap(), parts[3].parse().unwrap())
        })
        .collect();
    let mut correct = 0;
    for (i, &(x, y, domain)) in points.iter().enumerate() {
        let mut best = (f64::INFINITY, 0usize);
        for (j, &(ox, oy, od)) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let d2 = (x - ox).powi(2) + (y - oy).powi(2);
            if d2 < best.0 {
                best = (d2, od);
            }
        }
        if best.1 == domain {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / points.len() as f64;
    assert!(
        accuracy < 0.45,
        "identity-shift domains separated in projection: 1-NN accuracy {accuracy}"
    );
}

#[test]
fn schedule_table_first_row_midpoint_and_monotonicity() {
    let stdout = run_ok(&["schedule", "--alpha", "10", "--steps", "100", "--clamp", "5", "--rows", "11"]);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "n,n_over_N,lambda,ceiling");
    assert!(lines[1].starts_with("0,0,0,"), "{}", lines[1]);
    let lambdas: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(lambdas.windows(2).all(|w| w[1] > w[0]), "λ column not monotone: {lambdas:?}");
    let midpoint = lambdas[5];
    assert!((midpoint - 0.986614).abs() <= 1e-6, "midpoint λ = {midpoint}");

    let bad = run(&["schedule", "--alpha", "10", "--steps", "0"]);
    assert_eq!(exit_code(&bad), 2);
}

#[test]
fn da_clamp_flag_accepts_large_sweep_values() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), "data", 11, "default");
    for clamp in ["3000", "5000", "7000", "10000"] {
        let out_dir = dir.path().join(format!("run{clamp}"));
        run_ok(&[
            "train", "--protocol", "da", "--data", data.to_str().unwrap(),
            "--out", out_dir.to_str().unwrap(), "--epochs", "1", "--seed", "1",
            "--alpha", "10", "--clamp", clamp, "--batch-per-domain", "2",
        ]);
    }
}
