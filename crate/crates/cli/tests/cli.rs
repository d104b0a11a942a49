use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dissolve-gp"));
    c.env_remove("DISSOLVE_GP_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// The error object is the last stderr line; log warnings may precede it.
fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim_end().lines().last().unwrap_or("")).expect("stderr ends with JSON")
}

fn write_group(dir: &Path, name: &str, label: &str, rows: &[[f64; 4]]) -> String {
    let mut s = String::from("group,unit,time,value\n");
    for (j, row) in rows.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            s.push_str(&format!("{label},{},{},{v}\n", j + 1, 10 * (i + 1)));
        }
    }
    let p = dir.join(name);
    std::fs::write(&p, s).unwrap();
    p.to_string_lossy().into_owned()
}

fn test_of<'a>(report: &'a Value, method: &str) -> &'a Value {
    report["report"]["tests"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["method"] == method)
        .unwrap_or_else(|| panic!("no {method} in {report}"))
}

#[test]
fn compare_dataset_one() {
    let v = json_stdout(&run(&["compare", "--input", "bundled:dataset1", "--tests", "f2,msd-tsong", "--seed", "5"]));
    let f2 = test_of(&v, "f2")["point_estimate"].as_f64().unwrap();
    assert!((50.9..=53.9).contains(&f2), "{f2}");
    assert_eq!(v["config"]["seed"], 5);
    assert_eq!(v["config"]["command"], "compare");
    assert_eq!(test_of(&v, "msd-tsong")["decision"], false);
}

#[test]
fn self_comparison_is_similar() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<[f64; 4]> = (0..6).map(|j| [20.0 + j as f64, 45.0 - j as f64 * 0.5, 70.0, 85.0 + j as f64 * 0.3]).collect();
    let f = write_group(dir.path(), "r.csv", "R", &rows);
    let v = json_stdout(&run(&[
        "compare", "--reference", &f, "--test", &f, "--tests", "f2,delta", "--seed", "1", "--samples-m", "300", "--grid-r", "100",
    ]));
    assert_eq!(test_of(&v, "f2")["probability"].as_f64().unwrap(), 1.0);
    assert_eq!(test_of(&v, "delta")["probability"].as_f64().unwrap(), 1.0);
}

#[test]
fn exit_codes_and_error_json() {
    let out = run(&["compare", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "usage");

    let out = run(&["fit", "--input", "/definitely/missing.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["exit_code"], 2);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "group,unit,time,value\nR,1,10,abc\n").unwrap();
    let out = run(&["fit", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "parse");

    // identical units leave the pooled covariance singular
    let flat = [[20.0, 40.0, 60.0, 80.0]; 4];
    let r = write_group(dir.path(), "fr.csv", "R", &flat);
    let t = write_group(dir.path(), "ft.csv", "T", &[[21.0, 41.0, 61.0, 81.0]; 4]);
    let out = run(&["compare", "--reference", &r, "--test", &t, "--tests", "msd-tsong", "--seed", "0"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stderr_json(&out)["error"]["kind"], "conditioning");

    let out = bin().args(["bias-sweep", "--p-max", "6"]).env("DISSOLVE_GP_SEED", "x").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn echoed_seed_reproduces_output() {
    let first = run(&["simulate", "--scenario", "higuchi-f2=51.07-var=1", "--format", "csv", "--run", "2"]);
    assert!(first.status.success());
    let text = String::from_utf8(first.stdout.clone()).unwrap();
    let echo: Value = serde_json::from_str(text.lines().next().unwrap().strip_prefix("# config: ").unwrap()).unwrap();
    let seed = echo["seed"].as_u64().unwrap().to_string();
    let again = run(&["simulate", "--scenario", "higuchi-f2=51.07-var=1", "--format", "csv", "--run", "2", "--seed", &seed]);
    assert_eq!(first.stdout, again.stdout);

    let env = bin()
        .args(["simulate", "--scenario", "higuchi-f2=51.07-var=1"])
        .env("DISSOLVE_GP_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(json_stdout(&env)["config"]["seed"], 77);
}

#[test]
fn bias_sweep_trends_to_truth() {
    let v = json_stdout(&run(&["bias-sweep", "--figure", "left", "--p-min", "5", "--p-max", "100"]));
    let truth = v["truth"].as_f64().unwrap();
    let pts: Vec<f64> = v["points"].as_array().unwrap().iter().map(|p| p["f2_metric"].as_f64().unwrap()).collect();
    assert_eq!(pts.len(), 96);
    assert!(pts[0] > 50.0);
    assert!((pts[95] - truth).abs() < (pts[0] - truth).abs() / 10.0);
    assert!((truth - 49.45).abs() < 0.01);
}

#[test]
fn fit_series_bands_are_ordered() {
    for model in ["lsgp", "ctgp"] {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("series.csv");
        let status = run(&[
            "fit", "--input", "bundled:dataset2", "--group", "T", "--model", model, "--grid-r", "40", "--samples-m", "200",
            "--seed", "3", "--format", "csv", "--out", out.to_str().unwrap(),
        ]);
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let text = std::fs::read_to_string(&out).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# config: "));
        assert_eq!(lines.next().unwrap(), "t,mean,lower95,upper95");
        let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 40);
        for r in rows {
            assert!(r[2] <= r[1] && r[1] <= r[3], "{model}: {r:?}");
        }
    }
}

#[test]
fn validity_report_for_dataset_two() {
    let v = json_stdout(&run(&["validity", "--input", "bundled:dataset2"]));
    assert_eq!(v["overall"], true);
    assert_eq!(v["criteria"].as_array().unwrap().len(), 5);
}

#[test]
fn covariate_fit_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let fit = dir.path().join("fit.json");
    let out = run(&["covariate-fit", "--synthetic", "--seed", "9", "--out", fit.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&fit).unwrap()).unwrap();
    assert_eq!(saved["design"]["experiments"].as_array().unwrap().len(), 12);
    assert!(saved["in_sample_rmse"].as_f64().unwrap() < 1.5);

    let v = json_stdout(&run(&[
        "covariate-predict", "--fit", fit.to_str().unwrap(), "--medium", "PB", "--rpm", "100", "--viscosity", "1.4",
        "--vea", "HPMC", "--grid-r", "7",
    ]));
    let mean = v["series"]["mean"].as_array().unwrap();
    assert_eq!(mean.len(), 7);
    let m: Vec<f64> = mean.iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(m.windows(2).all(|w| w[1] > w[0]));

    let out = run(&["covariate-predict", "--fit", fit.to_str().unwrap(), "--medium", "water", "--rpm", "50", "--viscosity", "1", "--vea", "None"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mc_study_csv_table() {
    let out = run(&[
        "mc-study", "--scenario", "higuchi-f2=51.07-var=1", "--mc-runs", "3", "--format", "csv", "--seed", "2", "--workers", "1",
        "--samples-m", "300", "--grid-r", "200",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[1].starts_with("scenario,parameters,variance,model,mean,var"));
    assert_eq!(lines.len(), 3);
    assert!(lines[2].contains(",lsgp,"));

    let out = run(&["mc-study", "--scenario", "nonsense"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn crps_loo_reports_every_time() {
    let v = json_stdout(&run(&[
        "crps-loo", "--input", "bundled:dataset2", "--group", "R", "--samples-m", "200", "--seed", "4",
    ]));
    assert_eq!(v["per_time"].as_array().unwrap().len(), 8);
    assert!(v["mean"].as_f64().unwrap() > 0.0);
}
