use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_fracobstacle");

/// Coarse version of the first benchmark: 32 cells, 16 steps.
fn small_config() -> Value {
    json!({
        "kernel": {"alpha": 1.5, "lambda": 1.0, "dim": 1, "variant": {"kind": "pure_fractional"}},
        "grid": {"dim": 1, "box": [[-1.0, 1.0]], "h": 0.0625},
        "problem": {
            "horizon": 0.25,
            "n_steps": 16,
            "obstacle": {"kind": "parabola_cap", "height": 0.5, "curvature": 2.0, "rate": -0.1},
            "initial": {"kind": "obstacle_lift", "amplitude": 0.1}
        },
        "penalty": {"epsilon": 0.001, "levels": 3},
        "analysis": {"kernelcheck": {"pairs": 200}}
    })
}

fn write_config(dir: &Path, config: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn last_stderr_json(output: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&output.stderr);
    let line = stderr.lines().rev().find(|l| l.starts_with('{')).expect("JSON diagnostic on stderr");
    serde_json::from_str(line).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

fn schema_columns(schema: &Value, file: &str) -> Vec<String> {
    schema["files"][file]["columns"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn solve_writes_field_log_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config();
    config["penalty"]["levels"] = json!(1);
    let cfg = write_config(dir.path(), &config);
    let out = dir.path().join("solve");
    let o = run(&cfg, &out, &["solve"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["u.bin", "u.json", "u_final.csv", "run_log.jsonl", "newton_steps.csv", "summary.json", "resolved_config.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let summary = read_json(&out.join("summary.json"));
    assert!(summary["min_gap_to_obstacle"].as_f64().unwrap() > 0.0);
    assert!(summary["chosen_N"]["rationale"].as_str().unwrap().contains("max(1"));
    let resolved = read_json(&out.join("resolved_config.json"));
    assert_eq!(resolved["output"]["dir"], json!(out.to_str().unwrap()));
    let log = std::fs::read_to_string(out.join("run_log.jsonl")).unwrap();
    assert!(log.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));
}

#[test]
fn compare_reports_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config());
    let out = dir.path().join("cmp");
    let o = run(&cfg, &out, &["compare"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.join("convergence.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    let diffs: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    assert!(diffs.windows(2).all(|w| w[1] < w[0]), "{diffs:?}");
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config();
    config["problem"]["n_steps"] = json!("many");
    let cfg = write_config(dir.path(), &config);
    let o = run(&cfg, &dir.path().join("x"), &["solve"]);
    assert_eq!(o.status.code(), Some(1));
    let diag = last_stderr_json(&o);
    assert_eq!(diag["kind"], "validation");
    assert_eq!(diag["key"], "problem.n_steps");

    let mut config = small_config();
    config["penalty"]["epsilon"] = json!(-1.0);
    let cfg = write_config(dir.path(), &config);
    let o = run(&cfg, &dir.path().join("y"), &["solve"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(last_stderr_json(&o)["key"], "penalty.epsilon");
}

#[test]
fn unknown_subcommand_and_missing_config_exit_1() {
    let o = Command::new(BIN).arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(last_stderr_json(&o)["exit_code"], 1);
    let o = Command::new(BIN).arg("solve").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(BIN).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn failing_oracle_exits_3_with_time_index() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config();
    config["stepper"] = json!({"psor": {"max_sweeps": 2, "check_every": 1}});
    let cfg = write_config(dir.path(), &config);
    let o = run(&cfg, &dir.path().join("o"), &["oracle"]);
    assert_eq!(o.status.code(), Some(3));
    let diag = last_stderr_json(&o);
    assert_eq!(diag["kind"], "oracle");
    assert_eq!(diag["time_index"], 1);
}

#[test]
fn kernelcheck_passes_for_alpha_one_and_a_half() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config());
    let out = dir.path().join("k");
    let o = run(&cfg, &out, &["kernelcheck"]);
    assert!(o.status.success());
    let report = read_json(&out.join("kernelcheck.json"));
    assert_eq!(report["all_passed"], json!(true), "{report}");
    assert_eq!(report["bounds"]["checked"], 200);
}

#[test]
fn analysis_commands_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config());
    let oracle_dir = dir.path().join("oracle");
    assert!(run(&cfg, &oracle_dir, &["oracle"]).status.success());
    let field = oracle_dir.join("u.bin");

    let reg = dir.path().join("reg");
    let o = run(&cfg, &reg, &["regularity", "--field", field.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["regularity.json", "modulus.csv", "density.csv", "local_energy.csv", "mask.json"] {
        assert!(reg.join(f).exists(), "missing {f}");
    }

    let points = dir.path().join("points.json");
    std::fs::write(&points, r#"[{"x": [0.0], "t": 0.125}]"#).unwrap();
    let reg2 = dir.path().join("reg2");
    let o = run(&cfg, &reg2, &["regularity", "--field", field.to_str().unwrap(), "--points", points.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&reg2.join("regularity.json"));
    assert_eq!(report["reports"][0]["point"], json!({"node": 15, "slice": 8}));

    // a cylinder of radius 0.25 around x = -0.75 at an early slice leaves the box
    std::fs::write(&points, r#"[{"node": 4, "slice": 4}]"#).unwrap();
    let o = run(&cfg, &dir.path().join("reg3"), &["regularity", "--field", field.to_str().unwrap(), "--points", points.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let en = dir.path().join("energy");
    let o = run(&cfg, &en, &["energy", "--field", field.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&en.join("energy_report.json"));
    // 32 cells leave room for few levels before a cutoff ramp is sub-grid
    let levels = report["dyadic"]["levels"].as_array().unwrap().len();
    assert!(levels >= 1);
    assert!(levels > 6 || report["dyadic"]["truncated"] == json!(true));
}

#[test]
fn field_from_another_grid_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config());
    let oracle_dir = dir.path().join("oracle");
    assert!(run(&cfg, &oracle_dir, &["oracle"]).status.success());
    let mut other = small_config();
    other["grid"]["h"] = json!(0.125);
    let other_cfg = dir.path().join("other.json");
    std::fs::write(&other_cfg, other.to_string()).unwrap();
    let o = run(&other_cfg, &dir.path().join("e"), &["energy", "--field", oracle_dir.join("u.bin").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert!(run(&cfg, out, &["--seed", "5", "compare"]).status.success());
    }
    for f in ["u.bin", "u_oracle.bin", "convergence.csv", "run_log.jsonl", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn csv_headers_match_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config();
    config["penalty"]["levels"] = json!(1);
    config["output"] = json!({"all_slices": true});
    let cfg = write_config(dir.path(), &config);
    let runs: [(&str, &[&str]); 4] = [
        ("solve", &["u_final.csv", "newton_steps.csv"]),
        ("oracle", &["psor_steps.csv"]),
        ("regularity", &["modulus.csv", "density.csv", "local_energy.csv"]),
        ("energy", &["dyadic.csv"]),
    ];
    for (cmd, files) in runs {
        let out = dir.path().join(cmd);
        let o = run(&cfg, &out, &[cmd]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let schema = read_json(&out.join("csv_schema.json"));
        for f in files {
            let mut expected = schema_columns(&schema, f);
            if *f == "u_final.csv" {
                expected.retain(|c| c != "x1");
            }
            assert_eq!(csv_header(&out.join(f)), expected, "{cmd}/{f}");
        }
    }
    assert!(dir.path().join("solve/slices/u_0016.csv").exists());
    assert_eq!(
        csv_header(&dir.path().join("solve/slices/u_0000.csv")),
        csv_header(&dir.path().join("solve/u_final.csv"))
    );
}

#[test]
fn sweep_runs_every_cell_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config();
    config["analysis"]["sweep"] = json!({"alpha": [1.0, 1.5], "epsilon": [0.002, 0.001]});
    let cfg = write_config(dir.path(), &config);
    let out = dir.path().join("sweep");
    let o = run(&cfg, &out, &["--workers", "3", "sweep"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let schema = read_json(&out.join("csv_schema.json"));
    assert_eq!(csv_header(&out.join("sweep.csv")), schema_columns(&schema, "sweep.csv"));
    let mut r = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0].parse::<usize>().unwrap(), i);
        assert_eq!(&row[9], "ok");
        assert!(out.join(format!("cell_{i:03}/resolved_config.json")).exists());
    }
    let serial = dir.path().join("serial");
    assert!(run(&cfg, &serial, &["sweep"]).status.success());
    assert_eq!(std::fs::read(out.join("sweep.csv")).unwrap(), std::fs::read(serial.join("sweep.csv")).unwrap());
}
