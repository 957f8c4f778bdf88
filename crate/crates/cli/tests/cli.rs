//! End-to-end checks of the `cdpinn` binary: artifact layout, format
//! contracts, exit codes, and rerun determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cdpinn"))
}

/// Fresh scratch directory for one test.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cdpinn_cli_{name}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(command: &mut Command) -> Output {
    let output = command.output().unwrap();
    assert!(
        output.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

/// Short training run whose checkpoint the read-only commands can consume.
fn tiny_train(dir: &Path, extra: &[&str]) -> Output {
    let mut command = binary();
    command
        .args([
            "train",
            "--problem",
            "h2:1.0",
            "--profile",
            "desk",
            "--epochs",
            "250",
            "--lr",
            "1e-3",
            "--seed",
            "7",
            "--out",
        ])
        .arg(dir)
        .args(extra);
    run_ok(&mut command)
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

/// The loss log with the wall-clock column removed, for comparisons that
/// should not depend on timing.
fn losses_without_seconds(dir: &Path) -> String {
    read(&dir.join("losses.csv"))
        .lines()
        .map(|line| {
            let (kept, _seconds) = line.rsplit_once(',').unwrap();
            format!("{kept}\n")
        })
        .collect()
}

#[test]
fn train_writes_the_artifact_trail() {
    let dir = scratch("train_trail");
    tiny_train(&dir, &[]);

    let manifest: serde_json::Value =
        serde_json::from_str(&read(&dir.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["problem_label"], "h2_sto3g_1.0");
    assert_eq!(manifest["config"]["epochs"], 250);
    assert_eq!(manifest["problem_digest"].as_str().unwrap().len(), 64);

    let losses = read(&dir.join("losses.csv"));
    let mut lines = losses.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,l_ic,l_fc,l_action,l_adiabaticity,l_coupling,l_total,hermiticity_diag,seconds"
    );
    // Logged at 100, 200, and the final epoch 250.
    let epochs: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["100", "200", "250"]);

    let summary: serde_json::Value =
        serde_json::from_str(&read(&dir.join("summary.json"))).unwrap();
    assert_eq!(summary["epoch"], 250);
    assert!(summary["loss"]["l_total"].as_f64().unwrap().is_finite());

    let checkpoint: serde_json::Value =
        serde_json::from_str(&read(&dir.join("checkpoint.json"))).unwrap();
    assert_eq!(checkpoint["epoch"], 250);
    assert!(checkpoint["adam_m"].is_object());
}

#[test]
fn train_reruns_reproduce_the_loss_log() {
    let first = scratch("rerun_a");
    let second = scratch("rerun_b");
    tiny_train(&first, &[]);
    tiny_train(&second, &[]);
    assert_eq!(
        losses_without_seconds(&first),
        losses_without_seconds(&second),
        "same arguments must reproduce every logged number"
    );
    assert_eq!(
        read(&first.join("checkpoint.json")),
        read(&second.join("checkpoint.json"))
    );
}

#[test]
fn thread_cap_changes_nothing_and_rejects_garbage() {
    let first = scratch("threads_a");
    let second = scratch("threads_b");
    let mut command = binary();
    command
        .args([
            "train",
            "--problem",
            "h2:1.0",
            "--profile",
            "desk",
            "--epochs",
            "120",
            "--lr",
            "1e-3",
            "--seed",
            "3",
            "--out",
        ])
        .arg(&first)
        .env("CDPINN_THREADS", "1");
    run_ok(&mut command);
    let mut command = binary();
    command
        .args([
            "train",
            "--problem",
            "h2:1.0",
            "--profile",
            "desk",
            "--epochs",
            "120",
            "--lr",
            "1e-3",
            "--seed",
            "3",
            "--out",
        ])
        .arg(&second)
        .env("CDPINN_THREADS", "3");
    run_ok(&mut command);
    assert_eq!(
        losses_without_seconds(&first),
        losses_without_seconds(&second)
    );

    let output = binary()
        .args(["train", "--problem", "h2:1.0", "--profile", "desk"])
        .env("CDPINN_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unknown_problem_tag_lists_the_builtins() {
    let output = binary()
        .args(["train", "--problem", "h2:3.0", "--profile", "desk"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    for tag in ["h2:1.0", "h2:1.5", "h2:2.0", "h2:2.5"] {
        assert!(stderr.contains(tag), "missing {tag} in: {stderr}");
    }
}

#[test]
fn problem_files_load_like_builtins() {
    let dir = scratch("problem_file");
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems/h2_sto3g_1.5.json");
    let mut command = binary();
    command
        .args(["train", "--problem"])
        .arg(&path)
        .args([
            "--profile",
            "desk",
            "--epochs",
            "40",
            "--lr",
            "1e-3",
            "--out",
        ])
        .arg(&dir);
    run_ok(&mut command);
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&dir.join("manifest.json"))).unwrap();
    assert_eq!(manifest["problem_label"], "h2_sto3g_1.5");
}

#[test]
fn eval_tabulates_the_protocol() {
    let dir = scratch("eval");
    tiny_train(&dir, &[]);
    let mut command = binary();
    command
        .args(["eval", "--checkpoint"])
        .arg(dir.join("checkpoint.json"))
        .args(["--problem", "h2:1.0", "--grid", "16", "--out"])
        .arg(&dir);
    run_ok(&mut command);

    let schedule = read(&dir.join("schedule.csv"));
    let mut lines = schedule.lines();
    assert_eq!(lines.next().unwrap(), "t,lambda,dlambda_dt");
    assert_eq!(lines.count(), 16);

    let coefficients = read(&dir.join("coefficients.csv"));
    assert_eq!(
        coefficients.lines().next().unwrap(),
        "t,II,IX,IY,IZ,XI,XX,XY,XZ,YI,YX,YY,YZ,ZI,ZX,ZY,ZZ"
    );

    let operators = read(&dir.join("operators.jsonl"));
    let lines: Vec<&str> = operators.lines().collect();
    assert_eq!(lines.len(), 16);
    for line in lines {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(value["h"].as_array().unwrap().len(), 4);
        assert_eq!(value["a_cd_prime"][0].as_array().unwrap().len(), 4);
        assert_eq!(value["h"][0][0].as_array().unwrap().len(), 2);
    }

    let energies = read(&dir.join("energies.csv"));
    assert_eq!(
        energies.lines().next().unwrap(),
        "t,cd_e0,cd_e1,cd_e2,cd_e3,adiabatic_e0,adiabatic_e1,adiabatic_e2,adiabatic_e3"
    );

    let ranking: serde_json::Value =
        serde_json::from_str(&read(&dir.join("ranking.json"))).unwrap();
    let entries = ranking["ranking"].as_array().unwrap();
    assert_eq!(entries.len(), 16);
    let means: Vec<f64> = entries
        .iter()
        .map(|e| e["mean_abs_coefficient"].as_f64().unwrap())
        .collect();
    assert!(
        means.windows(2).all(|w| w[0] >= w[1]),
        "not descending: {means:?}"
    );
}

#[test]
fn eval_rejects_a_checkpoint_with_the_wrong_width() {
    let dir = scratch("eval_mismatch");
    tiny_train(&dir, &[]);
    // A one-qubit problem wants 13 outputs, the checkpoint has 35.
    let problem = dir.join("single_qubit.json");
    std::fs::write(
        &problem,
        r#"{
  "schema_version": 1,
  "label": "single",
  "n_qubits": 1,
  "h_initial": { "re": [[1.0, 0.0], [0.0, -1.0]] },
  "h_final": { "re": [[0.0, 1.0], [1.0, 0.0]] }
}
"#,
    )
    .unwrap();
    let output = binary()
        .args(["eval", "--checkpoint"])
        .arg(dir.join("checkpoint.json"))
        .args(["--problem"])
        .arg(&problem)
        .args(["--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn oracle_orders_actions_and_marks_the_degenerate_row() {
    let dir = scratch("oracle");
    tiny_train(&dir, &[]);
    let mut command = binary();
    command
        .args([
            "oracle",
            "--problem",
            "h2:1.0",
            "--lambda-grid",
            "21",
            "--checkpoint",
        ])
        .arg(dir.join("checkpoint.json"))
        .args(["--out"])
        .arg(&dir);
    run_ok(&mut command);

    let gauge = read(&dir.join("gauge.csv"));
    let mut lines = gauge.lines();
    assert_eq!(
        lines.next().unwrap(),
        "lambda,status,min_gap,action_zero,el_zero,action_nc,el_nc,action_exact,el_exact,\
         action_model,el_model,model_offdiag_distance"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 21);
    // The initial Hamiltonian has a coupled degenerate pair at lambda = 0.
    assert_eq!(rows[0][1], "degenerate");
    assert_eq!(rows[0][7], "");
    for row in &rows[1..] {
        assert_eq!(row[1], "ok", "row {row:?}");
        let action_zero: f64 = row[3].parse().unwrap();
        let action_nc: f64 = row[5].parse().unwrap();
        let action_exact: f64 = row[7].parse().unwrap();
        assert!(
            action_exact <= action_nc + 1e-12 && action_nc <= action_zero + 1e-12,
            "ordering violated: {row:?}"
        );
        let el_exact: f64 = row[8].parse().unwrap();
        assert!(el_exact <= 1e-9, "exact row has residual {el_exact}");
    }
}

#[test]
fn oracle_without_checkpoint_omits_model_columns_and_rejects_order_zero() {
    let dir = scratch("oracle_bare");
    let mut command = binary();
    command
        .args([
            "oracle",
            "--problem",
            "h2:2.5",
            "--lambda-grid",
            "5",
            "--out",
        ])
        .arg(&dir);
    run_ok(&mut command);
    let gauge = read(&dir.join("gauge.csv"));
    assert_eq!(
        gauge.lines().next().unwrap(),
        "lambda,status,min_gap,action_zero,el_zero,action_nc,el_nc,action_exact,el_exact"
    );

    let output = binary()
        .args(["oracle", "--problem", "h2:1.0", "--nc-order", "0", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn fidelity_traces_both_protocols_and_rejects_coarse_steps() {
    let dir = scratch("fidelity");
    tiny_train(&dir, &[]);
    let mut command = binary();
    command
        .args(["fidelity", "--checkpoint"])
        .arg(dir.join("checkpoint.json"))
        .args([
            "--problem",
            "h2:1.0",
            "--dt",
            "1e-3",
            "--grid",
            "21",
            "--out",
        ])
        .arg(&dir);
    run_ok(&mut command);

    let fidelity = read(&dir.join("fidelity.csv"));
    let mut lines = fidelity.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,cd_fidelity,adiabatic_fidelity,cd_norm_drift,adiabatic_norm_drift"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 21);
    for row in &rows {
        assert!(row[1] >= 0.0 && row[1] <= 1.0 + 1e-9);
        assert!(row[2] >= 0.0 && row[2] <= 1.0 + 1e-9);
        assert!(row[3] < 1e-6 && row[4] < 1e-6);
    }

    let output = binary()
        .args(["fidelity", "--checkpoint"])
        .arg(dir.join("checkpoint.json"))
        .args(["--problem", "h2:1.0", "--dt", "0.5", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn fidelity_rerun_is_identical() {
    let dir = scratch("fidelity_rerun");
    tiny_train(&dir, &[]);
    let run = |out: &Path| {
        let mut command = binary();
        command
            .args(["fidelity", "--checkpoint"])
            .arg(dir.join("checkpoint.json"))
            .args([
                "--problem",
                "h2:1.0",
                "--dt",
                "1e-3",
                "--grid",
                "11",
                "--out",
            ])
            .arg(out);
        run_ok(&mut command);
        read(&out.join("fidelity.csv"))
    };
    let first_dir = scratch("fidelity_rerun_a");
    let second_dir = scratch("fidelity_rerun_b");
    assert_eq!(run(&first_dir), run(&second_dir));
}
