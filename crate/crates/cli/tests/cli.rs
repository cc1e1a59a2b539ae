//! End-to-end behaviour of the experiment runner: determinism of logs,
//! checkpoint round-trips and resume, schema enforcement with exit codes,
//! sweep aggregation, and structural validity of emitted files.

use std::path::PathBuf;
use std::process::Command;

use logan_cli::checkpoint;
use logan_cli::config::RunConfig;
use logan_cli::csvlog;
use logan_cli::runner::{run_sweep, run_training, SweepConfig};
use logan_cli::svg::is_well_formed_xml;

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("logan-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn quick_config(run_id: &str, steps: u64) -> RunConfig {
    RunConfig::from_json(&format!(
        r#"{{
          "run_id": "{run_id}",
          "seed": 11,
          "train": {{ "batch_size": 8, "total_steps": {steps}, "optimiser": "adam",
                      "lr_d": 0.001, "lr_g": 0.001, "loss": "wasserstein",
                      "update_mode": "simultaneous", "metric_interval": 1,
                      "checkpoint_interval": 0, "coverage_interval": 0,
                      "coverage_samples": 64, "mode_radius": 0.4 }},
          "eval": {{ "samples": 64, "truncation": [1.0, 0.5], "eval_steps": [0, 1],
                     "mode_radius": 0.4 }}
        }}"#
    ))
    .unwrap()
}

#[test]
fn identical_seeds_give_byte_identical_logs() {
    let root = tmp_dir("determinism");
    let mut cfg_a = quick_config("a", 25);
    let mut cfg_b = quick_config("b", 25);
    cfg_a.run_id = "a".into();
    cfg_b.run_id = "b".into();
    run_training(&cfg_a, &root, None).unwrap();
    run_training(&cfg_b, &root, None).unwrap();
    let log_a = std::fs::read(root.join("a/metrics.csv")).unwrap();
    let log_b = std::fs::read(root.join("b/metrics.csv")).unwrap();
    assert_eq!(log_a, log_b);
    assert!(!log_a.is_empty());
}

#[test]
fn zero_steps_writes_initial_checkpoint_and_header_only() {
    let root = tmp_dir("zerosteps");
    let cfg = quick_config("zero", 0);
    run_training(&cfg, &root, None).unwrap();
    assert!(root.join("zero/checkpoints/initial.ckpt").exists());
    let text = std::fs::read_to_string(root.join("zero/metrics.csv")).unwrap();
    assert_eq!(text, csvlog::header_line());
    let rows = csvlog::parse_metrics(&text).unwrap();
    assert!(rows.is_empty());
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let root = tmp_dir("resume");
    let mut full_cfg = quick_config("full", 20);
    full_cfg.train.checkpoint_interval = 10;
    run_training(&full_cfg, &root, None).unwrap();

    let mut half_cfg = quick_config("half", 10);
    half_cfg.train.checkpoint_interval = 10;
    run_training(&half_cfg, &root, None).unwrap();

    let mut resumed_cfg = quick_config("half", 20);
    resumed_cfg.train.checkpoint_interval = 10;
    run_training(
        &resumed_cfg,
        &root,
        Some(&root.join("half/checkpoints/step_000010.ckpt")),
    )
    .unwrap();

    let full_log = std::fs::read(root.join("full/metrics.csv")).unwrap();
    let resumed_log = std::fs::read(root.join("half/metrics.csv")).unwrap();
    assert_eq!(full_log, resumed_log);

    let full_final = std::fs::read(root.join("full/checkpoints/final.ckpt")).unwrap();
    let resumed_final = std::fs::read(root.join("half/checkpoints/final.ckpt")).unwrap();
    assert_eq!(full_final, resumed_final);
}

#[test]
fn checkpoints_round_trip_and_reject_corruption() {
    let root = tmp_dir("ckpt");
    let mut cfg = quick_config("ck", 5);
    cfg.train.checkpoint_interval = 5;
    run_training(&cfg, &root, None).unwrap();
    let path = root.join("ck/checkpoints/final.ckpt");
    let loaded = checkpoint::load(&path).unwrap();
    let copy = root.join("copy.ckpt");
    checkpoint::save(&copy, &loaded.model, &loaded.state).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&copy).unwrap());

    let mut corrupt = std::fs::read(&path).unwrap();
    corrupt.truncate(corrupt.len() / 2);
    let bad = root.join("bad.ckpt");
    std::fs::write(&bad, corrupt).unwrap();
    assert!(checkpoint::load(&bad).is_err());
}

#[test]
fn emitted_svgs_are_well_formed() {
    let root = tmp_dir("svg");
    let cfg = quick_config("plots", 5);
    run_training(&cfg, &root, None).unwrap();
    let scatter = std::fs::read_to_string(root.join("plots/samples.svg")).unwrap();
    assert!(is_well_formed_xml(&scatter));

    let eval = logan_cli::runner::run_eval(
        &cfg,
        &root.join("plots/checkpoints/final.ckpt"),
        &root.join("eval-out"),
    )
    .unwrap();
    assert_eq!(eval.truncation.len(), 2);
    assert_eq!(eval.eval_steps.len(), 2);
    for name in ["truncation.svg", "eval_steps.svg"] {
        let text = std::fs::read_to_string(root.join("eval-out/plots").join(name)).unwrap();
        assert!(is_well_formed_xml(&text), "{name}");
    }
    for name in ["truncation.csv", "eval_steps.csv"] {
        let text = std::fs::read_to_string(root.join("eval-out/plots").join(name)).unwrap();
        assert!(
            text.lines().count() >= 3,
            "{name} should have header + rows"
        );
    }
}

#[test]
fn metrics_parse_under_the_strict_reader() {
    let root = tmp_dir("strict");
    let mut cfg = quick_config("strict", 12);
    cfg.train.coverage_interval = 5;
    cfg.train.coverage_samples = 32;
    run_training(&cfg, &root, None).unwrap();
    let text = std::fs::read_to_string(root.join("strict/metrics.csv")).unwrap();
    let rows = csvlog::parse_metrics(&text).unwrap();
    assert_eq!(rows.len(), 12);
    // coverage columns populated exactly on the interval
    for row in &rows {
        let sampled = row.values[9].is_some();
        assert_eq!(sampled, row.step % 5 == 0, "step {}", row.step);
    }
    assert!(!text.contains('\r'));
}

#[test]
fn single_cell_sweep_matches_direct_training() {
    let root = tmp_dir("sweep1");
    let sweep = SweepConfig::from_json(
        r#"{
          "base": {
            "run_id": "mini",
            "seed": 5,
            "train": { "batch_size": 8, "total_steps": 10, "optimiser": "adam",
                       "lr_d": 0.001, "lr_g": 0.001, "loss": "wasserstein",
                       "update_mode": "simultaneous", "metric_interval": 1,
                       "checkpoint_interval": 0, "coverage_interval": 0,
                       "coverage_samples": 64, "mode_radius": 0.4 },
            "eval": { "samples": 64, "truncation": [1.0], "eval_steps": [0],
                      "mode_radius": 0.4 }
          },
          "grid": {}
        }"#,
    )
    .unwrap();
    let cells = sweep.cells().unwrap();
    assert_eq!(cells.len(), 1);
    run_sweep(&sweep, &root, 1).unwrap();

    // the one cell is an ordinary run under the derived seed
    let mut direct = sweep.base.clone();
    direct.run_id = "direct".into();
    direct.seed = cells[0].config.seed;
    run_training(&direct, &root, None).unwrap();
    let cell_log = std::fs::read(root.join("mini_sweep/cell_0000/metrics.csv")).unwrap();
    let direct_log = std::fs::read(root.join("direct/metrics.csv")).unwrap();
    assert_eq!(cell_log, direct_log);
}

#[test]
fn sweep_grid_enumerates_and_sorts() {
    let root = tmp_dir("sweep2");
    let sweep = SweepConfig::from_json(
        r#"{
          "base": {
            "run_id": "mini",
            "seed": 5,
            "train": { "batch_size": 8, "total_steps": 10, "optimiser": "adam",
                       "lr_d": 0.001, "lr_g": 0.001, "loss": "wasserstein",
                       "update_mode": "simultaneous", "metric_interval": 5,
                       "checkpoint_interval": 0, "coverage_interval": 0,
                       "coverage_samples": 64, "mode_radius": 0.4 },
            "eval": { "samples": 64, "truncation": [1.0], "eval_steps": [0],
                      "mode_radius": 0.4 }
          },
          "grid": { "alpha": [0.9], "beta": [0.1, 5.0] }
        }"#,
    )
    .unwrap();
    assert_eq!(sweep.cells().unwrap().len(), 2);
    let table = run_sweep(&sweep, &root, 2).unwrap();
    let text = std::fs::read_to_string(table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[0].starts_with("cell,alpha,beta,w_r,c,seed"));
    // sorted ascending by proxy-FID
    let fid = |line: &str| -> f64 { line.split(',').nth(6).unwrap().parse().unwrap() };
    assert!(fid(lines[1]) <= fid(lines[2]));
    // cells never share a seed
    let seed = |line: &str| -> String { line.split(',').nth(5).unwrap().to_string() };
    assert_ne!(seed(lines[1]), seed(lines[2]));
}

#[test]
fn sweep_records_failed_cells_and_continues() {
    let root = tmp_dir("sweepfail");
    // learning rates large enough to overflow within a few steps: every
    // cell aborts, the sweep still finishes and records each failure
    let sweep = SweepConfig::from_json(
        r#"{
          "base": {
            "run_id": "blowup",
            "seed": 5,
            "latent": null,
            "train": { "batch_size": 4, "total_steps": 400, "optimiser": "sgd",
                       "lr_d": 1e150, "lr_g": 1e150, "loss": "wasserstein",
                       "update_mode": "simultaneous", "metric_interval": 100,
                       "checkpoint_interval": 0, "coverage_interval": 0,
                       "coverage_samples": 16, "mode_radius": 0.4 },
            "eval": { "samples": 16, "truncation": [1.0], "eval_steps": [0],
                      "mode_radius": 0.4 }
          },
          "grid": { "seeds": [0, 1] }
        }"#,
    )
    .unwrap();
    let table = run_sweep(&sweep, &root, 1).unwrap();
    let text = std::fs::read_to_string(table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[1].contains("failed:"), "{text}");
    assert!(lines[2].contains("failed:"), "{text}");
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_logan-lab"))
}

#[test]
fn schema_errors_exit_with_code_two() {
    let root = tmp_dir("exitcodes");
    let bad = root.join("bad.json");
    std::fs::write(&bad, r#"{"run_id": "x"}"#).unwrap();
    let out = binary()
        .args(["train", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(&root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("seed"), "{stderr}");

    let unknown = root.join("unknown.json");
    std::fs::write(&unknown, r#"{"run_id": "x", "seed": 1, "bogus": true}"#).unwrap();
    let out = binary()
        .args(["train", "--config"])
        .arg(&unknown)
        .arg("--out")
        .arg(&root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_subcommand_passes_and_prints_reports() {
    let out = binary().arg("check").output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let pass_lines = stdout.lines().filter(|l| l.contains("PASS")).count();
    assert!(pass_lines >= 12, "{stdout}");
    assert!(!stdout.contains("FAIL —"));
}

#[test]
fn game_subcommand_writes_trajectory_and_portrait() {
    let root = tmp_dir("game");
    let out = binary()
        .args([
            "game", "--game", "bilinear", "--method", "simgrad", "--lr", "0.1", "--steps", "40",
        ])
        .arg("--out")
        .arg(&root)
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("diverged: false"), "{stdout}");
    let csv = std::fs::read_to_string(root.join("game_bilinear_simgrad/trajectory.csv")).unwrap();
    assert!(csv.starts_with("step,p0,p1,param_norm,grad_norm"));
    assert_eq!(csv.lines().count(), 42); // header + initial + 40 steps
    let portrait = std::fs::read_to_string(root.join("game_bilinear_simgrad/phase.svg")).unwrap();
    assert!(is_well_formed_xml(&portrait));

    // spiral-out: norms strictly increase down the file
    let norms: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert!(norms.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn env_var_supplies_default_out_root() {
    let root = tmp_dir("envvar");
    let cfg_path = root.join("run.json");
    std::fs::write(
        &cfg_path,
        r#"{"run_id": "envrun", "seed": 2,
            "train": { "batch_size": 4, "total_steps": 2, "optimiser": "sgd",
                       "lr_d": 0.001, "lr_g": 0.001, "loss": "wasserstein",
                       "update_mode": "simultaneous", "metric_interval": 1,
                       "checkpoint_interval": 0, "coverage_interval": 0,
                       "coverage_samples": 16, "mode_radius": 0.4 }}"#,
    )
    .unwrap();
    let out = binary()
        .args(["train", "--config"])
        .arg(&cfg_path)
        .env("LOGAN_LAB_OUT", root.join("from-env"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(root.join("from-env/envrun/metrics.csv").exists());
}

#[test]
fn aborted_runs_exit_with_code_three() {
    let root = tmp_dir("abort");
    let cfg_path = root.join("run.json");
    // an absurd learning rate forces an overflow within a few steps
    std::fs::write(
        &cfg_path,
        r#"{"run_id": "blow", "seed": 2,
            "train": { "batch_size": 4, "total_steps": 400, "optimiser": "sgd",
                       "lr_d": 1e150, "lr_g": 1e150, "loss": "wasserstein",
                       "update_mode": "simultaneous", "metric_interval": 100,
                       "checkpoint_interval": 0, "coverage_interval": 0,
                       "coverage_samples": 16, "mode_radius": 0.4 },
            "latent": null}"#,
    )
    .unwrap();
    let out = binary()
        .args(["train", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&root)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(root.join("blow/abort_dump.txt").exists());
}

#[test]
fn eval_respects_the_tested_step_grid() {
    let root = tmp_dir("evalgrid");
    let mut cfg = quick_config("grid", 5);
    cfg.train.checkpoint_interval = 5;
    cfg.eval.eval_steps = vec![0, 1, 5, 10, 20, 30];
    cfg.eval.truncation = vec![1.0];
    cfg.eval.samples = 32;
    run_training(&cfg, &root, None).unwrap();
    let artifacts =
        logan_cli::runner::run_eval(&cfg, &root.join("grid/checkpoints/final.ckpt"), &root)
            .unwrap();
    assert_eq!(artifacts.eval_steps.len(), 6);
    let text = std::fs::read_to_string(root.join("grid/eval_steps.csv")).unwrap();
    assert_eq!(text.lines().count(), 7); // header + six rows
}

#[test]
fn config_canonical_round_trip_via_files() {
    let root = tmp_dir("roundtrip");
    let cfg = quick_config("rt", 3);
    let path = root.join("c.json");
    std::fs::write(&path, cfg.to_canonical_json()).unwrap();
    let again = RunConfig::load(&path).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.to_canonical_json(), again.to_canonical_json());
}
