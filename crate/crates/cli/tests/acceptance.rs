//! CLI acceptance: every command is a pure function of (input files, flags,
//! seed) — reruns and different `--threads` values produce byte-identical
//! outputs — plus golden-value and error-path checks.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_womac");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .expect("failed to spawn womac")
}

fn run_ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "womac {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name().to_string_lossy().into_owned();
        map.insert(name, fs::read(entry.path()).unwrap());
    }
    map
}

fn assert_identical_outputs(a: &Path, b: &Path, context: &str) {
    let left = dir_bytes(a);
    let right = dir_bytes(b);
    assert_eq!(
        left.keys().collect::<Vec<_>>(),
        right.keys().collect::<Vec<_>>(),
        "{context}: file sets differ"
    );
    for (name, bytes) in &left {
        assert_eq!(
            bytes, &right[name],
            "{context}: {name} differs between runs"
        );
    }
}

/// Hand case: three experts with constant reports 0.1/0.5/1.0 and outcomes
/// all 0. With k = 0.5 each cell's reference is the single best peer.
const TOY_PREDICTIONS: &str = "task_id,expert_id,prediction\n\
t1,alice,0.1\nt1,bob,0.5\nt1,carol,1.0\n\
t2,alice,0.1\nt2,bob,0.5\nt2,carol,1.0\n\
t3,alice,0.1\nt3,bob,0.5\nt3,carol,1.0\n";
const TOY_OUTCOMES: &str = "task_id,outcome\nt1,0\nt2,0\nt3,0\n";

fn write_toy(dir: &Path) -> (String, String) {
    let p = dir.join("preds.csv");
    let o = dir.join("outs.csv");
    fs::write(&p, TOY_PREDICTIONS).unwrap();
    fs::write(&o, TOY_OUTCOMES).unwrap();
    (
        p.to_string_lossy().into_owned(),
        o.to_string_lossy().into_owned(),
    )
}

/// A richer deterministic fixture: 20 tasks, 6 experts of varying skill.
fn write_experiment_fixture(dir: &Path) -> (String, String) {
    let mut state = 0xabcdef12u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let skills: Vec<f64> = (0..6).map(|_| 0.05 + 0.4 * next()).collect();
    let mut preds = String::from("task_id,expert_id,prediction\n");
    let mut outs = String::from("task_id,outcome\n");
    for t in 0..20 {
        let y = if next() < 0.5 { 0.0 } else { 1.0 };
        outs.push_str(&format!("q{t:02},{}\n", y as i64));
        for (j, &s) in skills.iter().enumerate() {
            let p = (y * (1.0 - s) + (1.0 - y) * s + 0.1 * (next() - 0.5)).clamp(0.0, 1.0);
            preds.push_str(&format!("q{t:02},fc{j},{p}\n"));
        }
    }
    let p = dir.join("exp_preds.csv");
    let o = dir.join("exp_outs.csv");
    fs::write(&p, preds).unwrap();
    fs::write(&o, outs).unwrap();
    (
        p.to_string_lossy().into_owned(),
        o.to_string_lossy().into_owned(),
    )
}

/// Criterion 9: score, simulate, and experiment are byte-deterministic
/// across reruns and across different --threads values.
#[test]
fn c9_byte_identical_reruns() {
    let tmp = TempDir::new().unwrap();
    let (preds, outs) = write_toy(tmp.path());
    let (exp_preds, exp_outs) = write_experiment_fixture(tmp.path());
    let cfg_path = tmp.path().join("cfg.json");
    fs::write(
        &cfg_path,
        r#"{"m_train_grid": [5, 8], "subsamples": 6, "m_test": 4,
            "k_policy": {"tuned-in-sample": {"grid": [0.2, 0.5, 1.0]}}, "seed": 11}"#,
    )
    .unwrap();
    let cfg = cfg_path.to_string_lossy().into_owned();
    let out = |name: &str| tmp.path().join(name).to_string_lossy().into_owned();

    let score_runs = [
        ("s1", vec!["--threads", "1"]),
        ("s2", vec!["--threads", "1"]),
        ("s3", vec!["--threads", "2"]),
        ("s4", vec![]),
    ];
    for (dir, extra) in &score_runs {
        let mut args = vec![
            "score",
            "--predictions",
            &preds,
            "--outcomes",
            &outs,
            "--mechanism",
            "womac-topk",
            "--k",
            "0.5",
            "--out-dir",
        ];
        let out_dir = out(dir);
        args.push(&out_dir);
        args.extend(extra.iter().copied());
        run_ok(&args);
    }
    for other in ["s2", "s3", "s4"] {
        assert_identical_outputs(&tmp.path().join("s1"), &tmp.path().join(other), "score");
    }

    let sim_runs = [
        ("m1", vec!["--threads", "1"]),
        ("m2", vec!["--threads", "3"]),
        ("m3", vec![]),
    ];
    for (dir, extra) in &sim_runs {
        let mut args = vec![
            "simulate",
            "--preset",
            "fig1-outflank",
            "--replicates",
            "3000",
            "--seed",
            "21",
            "--out-dir",
        ];
        let out_dir = out(dir);
        args.push(&out_dir);
        args.extend(extra.iter().copied());
        run_ok(&args);
    }
    for other in ["m2", "m3"] {
        assert_identical_outputs(&tmp.path().join("m1"), &tmp.path().join(other), "simulate");
    }

    let exp_runs = [
        ("e1", vec!["--threads", "1"]),
        ("e2", vec!["--threads", "2"]),
        ("e3", vec![]),
    ];
    for (dir, extra) in &exp_runs {
        let mut args = vec![
            "experiment",
            "--predictions",
            &exp_preds,
            "--outcomes",
            &exp_outs,
            "--config",
            &cfg,
            "--out-dir",
        ];
        let out_dir = out(dir);
        args.push(&out_dir);
        args.extend(extra.iter().copied());
        run_ok(&args);
    }
    for other in ["e2", "e3"] {
        assert_identical_outputs(&tmp.path().join("e1"), &tmp.path().join(other), "experiment");
    }

    println!("ACCEPTANCE C9 PASS - score/simulate/experiment byte-identical across reruns and thread counts");
}

/// The leaderboard matches values derived from the per-cell rule by hand:
/// with k = 0.5 and three constant-report experts, each cell's reference is
/// the single best peer, so alice and bob tie at 3*(0.4)^2 and carol scores
/// 3*(0.9)^2.
#[test]
fn golden_leaderboard_from_hand_rule() {
    let tmp = TempDir::new().unwrap();
    let (preds, outs) = write_toy(tmp.path());
    let out_dir = tmp.path().join("golden");
    run_ok(&[
        "score",
        "--predictions",
        &preds,
        "--outcomes",
        &outs,
        "--mechanism",
        "womac-topk",
        "--k",
        "0.5",
        "--out-dir",
        &out_dir.to_string_lossy(),
    ]);

    // Derivation, independent of the library: references are the best peer
    // (bob for alice; alice for bob and carol).
    let alice_score = 3.0 * (0.1f64 - 0.5).powi(2);
    let bob_score = 3.0 * (0.5f64 - 0.1).powi(2);
    let carol_score = 3.0 * (1.0f64 - 0.1).powi(2);
    let expected = format!(
        "rank,expert_id,score,mean_score\n\
         1,alice,{},{}\n2,bob,{},{}\n3,carol,{},{}\n",
        alice_score,
        alice_score / 3.0,
        bob_score,
        bob_score / 3.0,
        carol_score,
        carol_score / 3.0
    );
    let leaderboard = fs::read_to_string(out_dir.join("leaderboard.csv")).unwrap();
    assert_eq!(leaderboard, expected);

    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["winner_id"], "alice");
    assert_eq!(result["tied_winner_indices"], serde_json::json!([0, 1]));
    assert_eq!(result["mechanism"], "womac-topk");
    assert!(result["reference_checksum"].as_str().unwrap().len() == 16);
}

/// Standard mechanism: an expert whose column equals the outcomes is rank 1
/// with score exactly 0.
#[test]
fn standard_perfect_expert_tops_leaderboard() {
    let tmp = TempDir::new().unwrap();
    let preds = tmp.path().join("p.csv");
    let outs = tmp.path().join("o.csv");
    fs::write(
        &preds,
        "task_id,expert_id,prediction\n\
         t1,exact,1\nt1,other,0.4\nt2,exact,0\nt2,other,0.6\n",
    )
    .unwrap();
    fs::write(&outs, "task_id,outcome\nt1,1\nt2,0\n").unwrap();
    let out_dir = tmp.path().join("std");
    run_ok(&[
        "score",
        "--predictions",
        &preds.to_string_lossy(),
        "--outcomes",
        &outs.to_string_lossy(),
        "--mechanism",
        "standard",
        "--out-dir",
        &out_dir.to_string_lossy(),
    ]);
    let leaderboard = fs::read_to_string(out_dir.join("leaderboard.csv")).unwrap();
    let first = leaderboard.lines().nth(1).unwrap();
    assert_eq!(first, "1,exact,0,0");
}

/// fig1-outflank defaults: truthful row near 1/n, outflank row near one
/// half.
#[test]
fn fig1_preset_rows_match_story() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("fig1");
    run_ok(&[
        "simulate",
        "--preset",
        "fig1-outflank",
        "--replicates",
        "4000",
        "--seed",
        "3",
        "--out-dir",
        &out_dir.to_string_lossy(),
    ]);
    let csv = fs::read_to_string(out_dir.join("simulation_summary.csv")).unwrap();
    let freq = |label: &str| -> f64 {
        csv.lines()
            .find(|l| l.starts_with(&format!("{label},0,")))
            .unwrap()
            .split(',')
            .nth(2)
            .unwrap()
            .parse()
            .unwrap()
    };
    let truthful = freq("truthful");
    let outflank = freq("outflank");
    assert!((truthful - 0.1).abs() < 0.03, "truthful {truthful}");
    assert!(outflank > 0.35, "outflank {outflank}");
}

/// thm2-precision with equal noise models flags no separation.
#[test]
fn thm2_equal_noise_not_separated() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("thm2eq");
    run_ok(&[
        "simulate",
        "--preset",
        "thm2-precision",
        "--replicates",
        "3000",
        "--seed",
        "5",
        "--noise-a",
        "0.5",
        "--noise-b",
        "0.5",
        "--out-dir",
        &out_dir.to_string_lossy(),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("simulation_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["ci99_disjoint"], serde_json::json!(false));
}

/// Rerunning from the emitted resolved config reproduces the outputs.
#[test]
fn config_echo_round_trips() {
    let tmp = TempDir::new().unwrap();
    let (preds, outs) = write_experiment_fixture(tmp.path());
    let cfg_path = tmp.path().join("cfg.json");
    fs::write(
        &cfg_path,
        r#"{"m_train_grid": [5], "subsamples": 5, "m_test": 4,
            "k_policy": {"fixed": {"k": 0.5}}, "seed": 77}"#,
    )
    .unwrap();
    let first = tmp.path().join("run1");
    run_ok(&[
        "experiment",
        "--predictions",
        &preds,
        "--outcomes",
        &outs,
        "--config",
        &cfg_path.to_string_lossy(),
        "--out-dir",
        &first.to_string_lossy(),
    ]);
    let resolved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(first.join("config_resolved.json")).unwrap())
            .unwrap();
    let echoed = tmp.path().join("echoed.json");
    fs::write(
        &echoed,
        serde_json::to_string(&resolved["experiment"]).unwrap(),
    )
    .unwrap();
    let second = tmp.path().join("run2");
    run_ok(&[
        "experiment",
        "--predictions",
        &preds,
        "--outcomes",
        &outs,
        "--config",
        &echoed.to_string_lossy(),
        "--out-dir",
        &second.to_string_lossy(),
    ]);
    assert_identical_outputs(&first, &second, "config round-trip");
}

/// A k sweep emits one summary table per k.
#[test]
fn k_sweep_emits_per_k_tables() {
    let tmp = TempDir::new().unwrap();
    let (preds, outs) = write_experiment_fixture(tmp.path());
    let cfg_path = tmp.path().join("sweep.json");
    fs::write(
        &cfg_path,
        r#"{"m_train_grid": [5], "subsamples": 4, "m_test": 4,
            "k_policy": {"sweep": {"ks": [0.2, 1.0]}}, "seed": 9}"#,
    )
    .unwrap();
    let out_dir = tmp.path().join("sweep");
    run_ok(&[
        "experiment",
        "--predictions",
        &preds,
        "--outcomes",
        &outs,
        "--config",
        &cfg_path.to_string_lossy(),
        "--out-dir",
        &out_dir.to_string_lossy(),
    ]);
    assert!(out_dir.join("correlation_summary_k0.2.csv").exists());
    assert!(out_dir.join("correlation_summary_k1.csv").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("correlation_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["sweep"].as_array().unwrap().len(), 2);
}

/// The shipped fixture reproduces the shipped correlation table byte for
/// byte.
#[test]
fn golden_correlation_table() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("golden");
    run_ok(&[
        "experiment",
        "--predictions",
        &fixtures.join("toy_predictions.csv").to_string_lossy(),
        "--outcomes",
        &fixtures.join("toy_outcomes.csv").to_string_lossy(),
        "--config",
        &fixtures.join("golden_config.json").to_string_lossy(),
        "--out-dir",
        &out_dir.to_string_lossy(),
    ]);
    let got = fs::read(out_dir.join("correlation_summary.csv")).unwrap();
    let want = fs::read(fixtures.join("golden_correlation_summary.csv")).unwrap();
    assert_eq!(got, want, "correlation summary drifted from the golden file");
}

/// Validation failures exit 2 with a machine-readable JSON error; missing
/// files exit 3.
#[test]
fn error_paths_are_machine_readable() {
    let tmp = TempDir::new().unwrap();
    let preds = tmp.path().join("bad.csv");
    let outs = tmp.path().join("o.csv");
    fs::write(
        &preds,
        "task_id,expert_id,prediction\nt1,a,0.5\nt1,a,0.6\nt1,b,0.2\n",
    )
    .unwrap();
    fs::write(&outs, "task_id,outcome\nt1,1\n").unwrap();
    let out = run(&[
        "score",
        "--predictions",
        &preds.to_string_lossy(),
        "--outcomes",
        &outs.to_string_lossy(),
        "--out-dir",
        &tmp.path().join("x").to_string_lossy(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"]["code"], 2);
    assert_eq!(err["error"]["kind"], "validation");
    assert!(err["error"]["message"]
        .as_str()
        .unwrap()
        .contains("duplicate"));

    let out = run(&[
        "score",
        "--predictions",
        "/nonexistent/preds.csv",
        "--outcomes",
        &outs.to_string_lossy(),
        "--out-dir",
        &tmp.path().join("y").to_string_lossy(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "io");

    // Infeasible experiment sizes are clean validation errors.
    let (preds, outs) = write_experiment_fixture(tmp.path());
    let cfg_path = tmp.path().join("bad_cfg.json");
    fs::write(
        &cfg_path,
        r#"{"m_train_grid": [50], "subsamples": 2, "m_test": 4}"#,
    )
    .unwrap();
    let out = run(&[
        "experiment",
        "--predictions",
        &preds,
        "--outcomes",
        &outs,
        "--config",
        &cfg_path.to_string_lossy(),
        "--out-dir",
        &tmp.path().join("z").to_string_lossy(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

/// WOMAC_THREADS is equivalent to --threads and does not change outputs.
#[test]
fn threads_env_var_equivalent() {
    let tmp = TempDir::new().unwrap();
    let (preds, outs) = write_toy(tmp.path());
    let flag_dir = tmp.path().join("flag");
    run_ok(&[
        "score",
        "--predictions",
        &preds,
        "--outcomes",
        &outs,
        "--k",
        "0.5",
        "--out-dir",
        &flag_dir.to_string_lossy(),
        "--threads",
        "2",
    ]);
    let env_dir = tmp.path().join("env");
    let out = Command::new(BIN)
        .env("WOMAC_THREADS", "2")
        .args([
            "score",
            "--predictions",
            &preds,
            "--outcomes",
            &outs,
            "--k",
            "0.5",
            "--out-dir",
            &env_dir.to_string_lossy(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_identical_outputs(&flag_dir, &env_dir, "threads env");
}
