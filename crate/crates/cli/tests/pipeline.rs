//! End-to-end subcommand behavior through the compiled binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_reservoir-cast")
}

fn run(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.current_dir(dir).args(args);
    cmd.env_remove("RESERVOIR_CAST_THREADS");
    for (key, value) in envs {
        cmd.env(key, value);
    }
    cmd.output().expect("binary runs")
}

fn expect_ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args, &[]);
    assert!(
        out.status.success(),
        "`{}` failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn expect_exit(dir: &Path, args: &[&str], code: i32) -> String {
    let out = run(dir, args, &[]);
    assert_eq!(
        out.status.code(),
        Some(code),
        "`{}` stderr: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(path: &Path, contents: &str) {
    fs::write(path, contents).expect("test file writes");
}

fn read_bytes(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Parse a long-form value CSV into (time, loc) -> remaining columns.
fn read_csv_cells(path: &Path) -> BTreeMap<(i64, Vec<String>), Vec<f64>> {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut rows = text.lines();
    rows.next().expect("header");
    let mut cells = BTreeMap::new();
    for line in rows {
        let fields: Vec<&str> = line.split(',').collect();
        let time: i64 = fields[0].parse().expect("time");
        let keys: Vec<String> = fields[1..fields.len() - 1]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let values = vec![fields[fields.len() - 1].parse::<f64>().expect("value")];
        cells.insert((time, keys), values);
    }
    cells
}

/// Small linear-field experiment config shared by several tests.
fn small_config(model: &str) -> String {
    format!(
        r#"{{
  "model": "{model}",
  "base_seed": 11,
  "n_res": 3,
  "qeesn": {{
    "reservoir": {{"n_h": 16, "pi_w": 0.1, "pi_u": 0.1, "a_w": 0.1, "a_u": 0.1, "nu": 0.6}},
    "embedding": {{"m": 1, "tau": 1}},
    "r_v": 0.01, "lead": 2, "burn_in": 10, "add_noise": true
  }},
  "deesn": {{
    "esn": {{"n_h_1": 14, "n_h_tilde": [5], "nu": [0.7, 0.7], "pi_w": 0.1, "pi_u": 0.1,
            "a_w": 0.1, "a_u": 0.1, "embedding": {{"m": 0, "tau": 1}},
            "r_v": 0.01, "lead": 2, "burn_in": 10}},
    "basis_k": 3,
    "gibbs": {{"iters": 80, "burn": 30}}
  }},
  "simulate": {{"t_len": 150, "discard": 50, "linear": {{"p": 3, "n_y": 6, "rho": 0.8, "noise_sd": 0.3}}}}
}}"#
    )
}

/// Simulate a series and split it: history CSV missing the last `holdout`
/// times, full series kept as truth.
fn simulate_split(dir: &Path, config: &str, holdout: usize) -> (PathBuf, PathBuf, PathBuf) {
    write(&dir.join("config.json"), config);
    expect_ok(
        dir,
        &[
            "simulate",
            "--model",
            "linear",
            "--config",
            "config.json",
            "--out",
            "sim",
        ],
    );
    let truth = dir.join("sim/field.csv");
    let locations = dir.join("sim/locations.csv");
    let text = fs::read_to_string(&truth).expect("field.csv");
    let mut lines: Vec<&str> = text.lines().collect();
    let n_loc = fs::read_to_string(&locations)
        .expect("locations.csv")
        .lines()
        .count()
        - 1;
    lines.truncate(lines.len() - holdout * n_loc);
    let history = dir.join("history.csv");
    write(&history, &(lines.join("\n") + "\n"));
    (history, truth, locations)
}

#[test]
fn the_same_seed_reproduces_a_simulation_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for out in ["a", "b"] {
        expect_ok(
            dir,
            &["simulate", "--model", "linear", "--out", out, "--seed", "7"],
        );
    }
    expect_ok(
        dir,
        &["simulate", "--model", "linear", "--out", "c", "--seed", "8"],
    );
    assert_eq!(
        read_bytes(&dir.join("a/field.csv")),
        read_bytes(&dir.join("b/field.csv"))
    );
    assert_eq!(
        read_bytes(&dir.join("a/truth.json")),
        read_bytes(&dir.join("b/truth.json"))
    );
    assert_ne!(
        read_bytes(&dir.join("a/field.csv")),
        read_bytes(&dir.join("c/field.csv"))
    );
}

#[test]
fn the_shallow_ensemble_round_trips_from_training_to_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (history, truth, locations) = simulate_split(dir, &small_config("qeesn"), 2);
    expect_ok(
        dir,
        &[
            "train",
            "--config",
            "config.json",
            "--data",
            history.to_str().unwrap(),
            "--locations",
            locations.to_str().unwrap(),
            "--out",
            "model",
        ],
    );
    assert!(dir.join("model/members.bin").is_file());
    assert!(dir.join("model/model.json").is_file());
    assert!(dir.join("model/manifest.json").is_file());

    for out in ["fc", "fc_again"] {
        expect_ok(
            dir,
            &[
                "forecast",
                "--model",
                "model",
                "--data",
                history.to_str().unwrap(),
                "--horizon",
                "2",
                "--out",
                out,
            ],
        );
    }
    assert_eq!(
        read_bytes(&dir.join("fc/members.csv")),
        read_bytes(&dir.join("fc_again/members.csv"))
    );
    assert_eq!(
        read_bytes(&dir.join("fc/summary.csv")),
        read_bytes(&dir.join("fc_again/summary.csv"))
    );

    let summary = fs::read_to_string(dir.join("fc/summary.csv")).unwrap();
    for line in summary.lines().skip(1) {
        let fields: Vec<f64> = line
            .split(',')
            .skip(2)
            .map(|v| v.parse().unwrap())
            .collect();
        let (mean, lower, upper) = (fields[0], fields[1], fields[2]);
        assert!(lower <= upper, "inverted interval in {line}");
        assert!(mean.is_finite());
    }

    expect_ok(
        dir,
        &[
            "evaluate",
            "--forecast",
            "fc",
            "--truth",
            truth.to_str().unwrap(),
            "--out",
            "scores",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("scores/scores.json")).unwrap()).unwrap();
    assert!(report["mspe"].as_f64().unwrap().is_finite());
    assert!(report["crps_mean"].as_f64().unwrap() >= 0.0);
    let per_lead = fs::read_to_string(dir.join("scores/per_lead.csv")).unwrap();
    assert_eq!(per_lead.lines().count(), 3, "header plus one row per lead");
    assert!(per_lead.starts_with("lead,time,mspe,crps,coverage\n"));
}

#[test]
fn the_deep_model_round_trips_through_its_model_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (history, _truth, locations) = simulate_split(dir, &small_config("deesn"), 2);
    expect_ok(
        dir,
        &[
            "train",
            "--config",
            "config.json",
            "--data",
            history.to_str().unwrap(),
            "--locations",
            locations.to_str().unwrap(),
            "--out",
            "model",
        ],
    );
    for name in ["deesn.json", "basis.bin", "chain.bin"] {
        assert!(dir.join("model").join(name).is_file(), "missing {name}");
    }
    for out in ["fc", "fc_again"] {
        expect_ok(
            dir,
            &[
                "forecast",
                "--model",
                "model",
                "--data",
                history.to_str().unwrap(),
                "--horizon",
                "2",
                "--out",
                out,
            ],
        );
    }
    assert_eq!(
        read_bytes(&dir.join("fc/members.csv")),
        read_bytes(&dir.join("fc_again/members.csv"))
    );
}

#[test]
fn simple_baselines_forecast_their_defining_values() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (history, _truth, locations) = simulate_split(dir, &small_config("persistence"), 2);
    let field = read_csv_cells(&history);
    let last_time = field.keys().map(|(t, _)| *t).max().unwrap();
    let t_len = field.keys().map(|(t, _)| *t).collect::<std::collections::BTreeSet<_>>().len();

    for model in ["persistence", "climatology"] {
        write(
            &dir.join("simple.json"),
            &format!(r#"{{"model": "{model}"}}"#),
        );
        expect_ok(
            dir,
            &[
                "train",
                "--config",
                "simple.json",
                "--data",
                history.to_str().unwrap(),
                "--locations",
                locations.to_str().unwrap(),
                "--out",
                model,
            ],
        );
        expect_ok(
            dir,
            &[
                "forecast",
                "--model",
                model,
                "--data",
                history.to_str().unwrap(),
                "--horizon",
                "2",
                "--out",
                &format!("fc_{model}"),
            ],
        );
        let forecast = read_csv_cells(&dir.join(format!("fc_{model}/members.csv")));
        for ((time, keys), values) in &forecast {
            let loc = keys[0].clone();
            assert!(*time > last_time);
            let expected = match model {
                "persistence" => field[&(last_time, vec![loc])][0],
                _ => {
                    let sum: f64 = field
                        .iter()
                        .filter(|((_, k), _)| k[0] == loc)
                        .map(|(_, v)| v[0])
                        .sum();
                    sum / t_len as f64
                }
            };
            assert!(
                (values[0] - expected).abs() < 1e-12,
                "{model} at time {time}: {} vs {expected}",
                values[0]
            );
        }
    }

    write(
        &dir.join("simple.json"),
        r#"{"model": "kriging", "kriging": {"sigma2": 1.0, "rho_s": 0.8, "rho_t": 1.2, "nugget": 0.05, "window": 4}}"#,
    );
    expect_ok(
        dir,
        &[
            "train",
            "--config",
            "simple.json",
            "--data",
            history.to_str().unwrap(),
            "--locations",
            locations.to_str().unwrap(),
            "--out",
            "kriging",
        ],
    );
    expect_ok(
        dir,
        &[
            "forecast",
            "--model",
            "kriging",
            "--data",
            history.to_str().unwrap(),
            "--horizon",
            "2",
            "--out",
            "fc_kriging",
        ],
    );
    let summary = fs::read_to_string(dir.join("fc_kriging/summary.csv")).unwrap();
    for line in summary.lines().skip(1) {
        let fields: Vec<f64> = line
            .split(',')
            .skip(2)
            .map(|v| v.parse().unwrap())
            .collect();
        assert!(fields[1] <= fields[0] && fields[0] <= fields[2], "band must bracket the mean: {line}");
    }
}

#[test]
fn config_mistakes_exit_with_the_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (history, _truth, locations) = simulate_split(dir, &small_config("qeesn"), 2);

    write(&dir.join("typo.json"), r#"{"model": "qeesn", "typo_key": 1}"#);
    let stderr = expect_exit(
        dir,
        &[
            "train",
            "--config",
            "typo.json",
            "--data",
            history.to_str().unwrap(),
            "--locations",
            locations.to_str().unwrap(),
            "--out",
            "x",
        ],
        2,
    );
    assert!(stderr.contains("typo_key"), "stderr: {stderr}");

    write(
        &dir.join("range.json"),
        r#"{"model": "deesn", "deesn": {"basis_k": 0}}"#,
    );
    expect_exit(
        dir,
        &[
            "train",
            "--config",
            "range.json",
            "--data",
            history.to_str().unwrap(),
            "--locations",
            locations.to_str().unwrap(),
            "--out",
            "x",
        ],
        2,
    );
}

#[test]
fn a_blowing_up_simulation_exits_with_the_simulation_code_and_names_the_step() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write(
        &dir.join("boom.json"),
        r#"{"model": "persistence",
            "simulate": {"t_len": 500, "discard": 0,
                         "gqn": {"p": 6, "n_y": 6, "quad_scale": 40.0, "noise_sd": 1.0}}}"#,
    );
    let stderr = expect_exit(
        dir,
        &[
            "simulate",
            "--model",
            "gqn",
            "--config",
            "boom.json",
            "--out",
            "x",
            "--seed",
            "1",
        ],
        3,
    );
    assert!(stderr.contains("step"), "stderr: {stderr}");
}

#[test]
fn forecast_and_evaluate_reject_requests_their_inputs_cannot_support() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (history, truth, locations) = simulate_split(dir, &small_config("qeesn"), 2);
    expect_ok(
        dir,
        &[
            "train",
            "--config",
            "config.json",
            "--data",
            history.to_str().unwrap(),
            "--locations",
            locations.to_str().unwrap(),
            "--out",
            "model",
        ],
    );

    let text = fs::read_to_string(&history).unwrap();
    let short: Vec<&str> = text.lines().take(1 + 2 * 6).collect();
    write(&dir.join("short.csv"), &(short.join("\n") + "\n"));
    let stderr = expect_exit(
        dir,
        &[
            "forecast",
            "--model",
            "model",
            "--data",
            "short.csv",
            "--horizon",
            "2",
            "--out",
            "x",
        ],
        4,
    );
    assert!(stderr.contains("history"), "stderr: {stderr}");

    expect_exit(
        dir,
        &[
            "forecast",
            "--model",
            "model",
            "--data",
            history.to_str().unwrap(),
            "--horizon",
            "3",
            "--out",
            "x",
        ],
        2,
    );

    expect_ok(
        dir,
        &[
            "forecast",
            "--model",
            "model",
            "--data",
            history.to_str().unwrap(),
            "--horizon",
            "2",
            "--out",
            "fc",
        ],
    );
    let truth_text = fs::read_to_string(&truth).unwrap();
    let truncated: Vec<&str> = truth_text.lines().take(1 + 148 * 6).collect();
    write(&dir.join("partial.csv"), &(truncated.join("\n") + "\n"));
    let stderr = expect_exit(
        dir,
        &[
            "evaluate",
            "--forecast",
            "fc",
            "--truth",
            "partial.csv",
            "--out",
            "x",
        ],
        4,
    );
    assert!(stderr.contains("observation"), "stderr: {stderr}");
}

#[test]
fn the_thread_cap_does_not_change_the_fitted_ensemble() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (history, _truth, locations) = simulate_split(dir, &small_config("qeesn"), 2);
    for (out, threads) in [("seq", "1"), ("par", "3")] {
        let result = run(
            dir,
            &[
                "train",
                "--config",
                "config.json",
                "--data",
                history.to_str().unwrap(),
                "--locations",
                locations.to_str().unwrap(),
                "--out",
                out,
            ],
            &[("RESERVOIR_CAST_THREADS", threads)],
        );
        assert!(result.status.success());
    }
    assert_eq!(
        read_bytes(&dir.join("seq/members.bin")),
        read_bytes(&dir.join("par/members.bin"))
    );
    assert_eq!(
        read_bytes(&dir.join("seq/model.json")),
        read_bytes(&dir.join("par/model.json"))
    );

    let out = run(
        dir,
        &[
            "train",
            "--config",
            "config.json",
            "--data",
            history.to_str().unwrap(),
            "--locations",
            locations.to_str().unwrap(),
            "--out",
            "x",
        ],
        &[("RESERVOIR_CAST_THREADS", "many")],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn a_perfect_forecast_scores_zero_error_and_full_coverage() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let truth = "time,loc,value\n10,0,1.25\n10,1,-0.5\n11,0,2.0\n11,1,0.75\n";
    write(&dir.join("truth.csv"), truth);
    fs::create_dir(dir.join("fc")).unwrap();
    let mut members = String::from("time,loc,member,value\n");
    let mut summary = String::from("time,loc,mean,q025,q975\n");
    for (time, loc, value) in [(10, 0, 1.25), (10, 1, -0.5), (11, 0, 2.0), (11, 1, 0.75)] {
        for member in 0..2 {
            members.push_str(&format!("{time},{loc},{member},{value:.16e}\n"));
        }
        summary.push_str(&format!("{time},{loc},{value:.16e},{value:.16e},{value:.16e}\n"));
    }
    write(&dir.join("fc/members.csv"), &members);
    write(&dir.join("fc/summary.csv"), &summary);
    expect_ok(
        dir,
        &[
            "evaluate",
            "--forecast",
            "fc",
            "--truth",
            "truth.csv",
            "--out",
            "scores",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("scores/scores.json")).unwrap()).unwrap();
    assert_eq!(report["mspe"].as_f64().unwrap(), 0.0);
    assert_eq!(report["crps_mean"].as_f64().unwrap(), 0.0);
    assert_eq!(report["coverage"].as_f64().unwrap(), 1.0);
}

#[test]
fn tune_cv_echoes_a_singleton_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut config: serde_json::Value = serde_json::from_str(&small_config("qeesn")).unwrap();
    config["tune"] = serde_json::json!({
        "grid": {"n_h": [12], "nu": [0.55], "r_v": [0.02]}
    });
    write(&dir.join("config.json"), &config.to_string());
    let (history, _truth, locations) = {
        expect_ok(
            dir,
            &[
                "simulate",
                "--model",
                "linear",
                "--config",
                "config.json",
                "--out",
                "sim",
            ],
        );
        (
            dir.join("sim/field.csv"),
            dir.join("sim/field.csv"),
            dir.join("sim/locations.csv"),
        )
    };
    let _ = _truth;
    expect_ok(
        dir,
        &[
            "tune",
            "--config",
            "config.json",
            "--data",
            history.to_str().unwrap(),
            "--locations",
            locations.to_str().unwrap(),
            "--method",
            "cv",
            "--out",
            "tuned",
        ],
    );
    let selected: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("tuned/selected.json")).unwrap())
            .unwrap();
    assert_eq!(selected["qeesn"]["reservoir"]["n_h"], 12);
    assert_eq!(selected["qeesn"]["reservoir"]["nu"], 0.55);
    assert_eq!(selected["qeesn"]["r_v"], 0.02);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("tuned/report.json")).unwrap()).unwrap();
    assert_eq!(report["trials"].as_array().unwrap().len(), 1);

    let stderr = expect_exit(
        dir,
        &[
            "tune",
            "--config",
            "config.json",
            "--data",
            history.to_str().unwrap(),
            "--locations",
            locations.to_str().unwrap(),
            "--method",
            "ga",
            "--out",
            "x",
        ],
        2,
    );
    assert!(stderr.contains("deesn"), "stderr: {stderr}");
}

#[test]
fn tune_ga_spending_its_budget_on_the_first_population_runs_one_generation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut config: serde_json::Value = serde_json::from_str(&small_config("deesn")).unwrap();
    config["n_res"] = serde_json::json!(2);
    config["tune"] = serde_json::json!({
        "ga_space": {"nu": [0.4, 0.9], "n_h_1": [10, 16], "n_h_tilde": [4, 6],
                      "r_v": [1e-4, 1e-1], "m": [0, 1]},
        "ga": {"population": 4, "max_generations": 5, "tournament": 2,
               "crossover_prob": 0.5, "mutation_prob": 0.2, "elitism": 1, "budget": 4}
    });
    write(&dir.join("config.json"), &config.to_string());
    expect_ok(
        dir,
        &[
            "simulate",
            "--model",
            "linear",
            "--config",
            "config.json",
            "--out",
            "sim",
        ],
    );
    expect_ok(
        dir,
        &[
            "tune",
            "--config",
            "config.json",
            "--data",
            "sim/field.csv",
            "--locations",
            "sim/locations.csv",
            "--method",
            "ga",
            "--out",
            "tuned",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("tuned/report.json")).unwrap()).unwrap();
    assert_eq!(report["trace"].as_array().unwrap().len(), 1);
    assert_eq!(report["evaluations"], 4);

    expect_ok(
        dir,
        &[
            "train",
            "--config",
            "tuned/selected.json",
            "--data",
            "sim/field.csv",
            "--locations",
            "sim/locations.csv",
            "--out",
            "model",
        ],
    );
    assert!(dir.join("model/chain.bin").is_file());
}
