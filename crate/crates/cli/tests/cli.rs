use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn twolocus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twolocus"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const PARAMS: &str = r#"{"K":2,"L":2,"thetaA":1.0,"thetaB":1.0,"rho":50.0,
  "PA":[[0.5,0.5],[0.5,0.5]],"PB":[[0.5,0.5],[0.5,0.5]],"pim":true}"#;

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn column(header: &str, name: &str) -> usize {
    header
        .split(',')
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn first_order_gaussian_column_equals_q0_plus_q1_over_rho() {
    let dir = TempDir::new().unwrap();
    let params = write(dir.path(), "p.json", PARAMS);
    let out = twolocus(&[
        "q",
        "--params",
        &params,
        "--enumerate",
        "4",
        "--rho",
        "25,200",
        "--lambda",
        "0,1,2",
        "--no-clamp",
    ]);
    let text = stdout(&out);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let (rho_i, q0_i, q1_i, g1_i) = (
        column(header, "rho"),
        column(header, "q0"),
        column(header, "q1"),
        column(header, "gauss_1"),
    );
    let mut rows = 0;
    for line in lines {
        let cells: Vec<f64> = line
            .split(',')
            .skip(1)
            .map(|x| x.parse().unwrap_or(f64::NAN))
            .collect();
        let get = |i: usize| cells[i - 1];
        let expected = get(q0_i) + get(q1_i) / get(rho_i);
        assert!(
            (get(g1_i) - expected).abs() <= 1e-12 * expected.abs().max(1e-300),
            "{line}"
        );
        rows += 1;
    }
    assert_eq!(rows, 2 * 35);
}

#[test]
fn exact_values_and_cache_agree() {
    let dir = TempDir::new().unwrap();
    let params = write(dir.path(), "p.json", PARAMS);
    let config = write(
        dir.path(),
        "c.json",
        r#"[{"c":[[2,0],[0,1]]},{"a":[1,0],"b":[0,0],"c":[[1,1],[0,0]]}]"#,
    );
    let cache = dir.path().join("cache");
    let args = [
        "q",
        "--params",
        &params,
        "--config",
        &config,
        "--exact",
        "--cache",
        cache.to_str().unwrap(),
    ];
    let first = stdout(&twolocus(&args));
    let second = stdout(&twolocus(&args));
    assert_eq!(first, second);
    assert!(first.lines().next().unwrap().ends_with(",exact"));
    assert_eq!(first.lines().count(), 3);
}

#[test]
fn state_cap_surfaces_with_exit_code() {
    let dir = TempDir::new().unwrap();
    let params = write(dir.path(), "p.json", PARAMS);
    let config = write(dir.path(), "c.json", r#"{"c":[[3,3],[3,3]]}"#);
    let out = twolocus(&[
        "q",
        "--params",
        &params,
        "--config",
        &config,
        "--exact",
        "--state-cap",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(5));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"], "StateCap");
}

#[test]
fn validation_and_usage_errors() {
    let dir = TempDir::new().unwrap();
    let bad = write(
        dir.path(),
        "p.json",
        &PARAMS.replace(
            "[[0.5,0.5],[0.5,0.5]],\"PB\"",
            "[[0.5,0.6],[0.5,0.5]],\"PB\"",
        ),
    );
    let out = twolocus(&["q", "--params", &bad, "--enumerate", "2"]);
    assert_eq!(out.status.code(), Some(3));
    let v: serde_json::Value =
        serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"], "NonStochasticRow");

    let out = twolocus(&["q", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    serde_json::from_str::<serde_json::Value>(err.trim()).unwrap();

    let out = twolocus(&[
        "sim", "coupling", "--rho", "2", "--c", "4", "--reps", "10", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let missing = twolocus(&["q", "--params", "/nonexistent/p.json", "--enumerate", "2"]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn loose_alpha_overflow_is_a_model_validity_error() {
    let dir = TempDir::new().unwrap();
    let params = write(
        dir.path(),
        "p.json",
        &PARAMS.replace("\"rho\":50.0", "\"rho\":2.0"),
    );
    let config = write(dir.path(), "c.json", r#"{"c":[[2,0],[0,2]]}"#);
    let out = twolocus(&[
        "sim", "estimate", "--params", &params, "--config", &config, "--model", "loose", "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(6));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = TempDir::new().unwrap();
    let params = write(dir.path(), "p.json", PARAMS);
    for sub in [
        ["gaussian", "--reps", "3000"],
        ["coalescent", "--reps", "300"],
    ] {
        let mut outputs = Vec::new();
        for (i, threads) in ["1", "4"].iter().enumerate() {
            let path = dir.path().join(format!("{}-{i}.jsonl", sub[0]));
            let out = twolocus(&[
                "--threads",
                threads,
                "sim",
                sub[0],
                "--params",
                &params,
                sub[1],
                sub[2],
                "--seed",
                "99",
                "--out",
                path.to_str().unwrap(),
            ]);
            stdout(&out);
            outputs.push(std::fs::read(&path).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "{} differs across runs", sub[0]);
        assert!(!outputs[0].is_empty());
    }
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let dir = TempDir::new().unwrap();
    let params = write(dir.path(), "p.json", PARAMS);
    let config = write(dir.path(), "c.json", r#"{"c":[[1,0],[0,1]]}"#);
    let run = |threads: &str| {
        stdout(&twolocus(&[
            "--threads",
            threads,
            "sim",
            "estimate",
            "--params",
            &params,
            "--config",
            &config,
            "--reps",
            "50000",
            "--seed",
            "7",
        ]))
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn coupling_report_is_centred_on_first_order_rate() {
    let out = twolocus(&[
        "sim", "coupling", "--rho", "100", "--c", "2", "--reps", "200000", "--seed", "11",
    ]);
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    let (p, se) = (
        v["failure"][0][0].as_f64().unwrap(),
        v["failure"][0][1].as_f64().unwrap(),
    );
    assert_eq!(v["first_order_target"].as_f64().unwrap(), 0.01);
    assert!(
        (p - 0.01).abs() <= 3.0 * se + 1.0 / (100.0 * 100.0),
        "{p} +- {se}"
    );
}

#[test]
fn missing_seed_is_generated_and_reported() {
    let out = twolocus(&["sim", "coupling", "--rho", "50", "--reps", "100"]);
    stdout(&out);
    let err = String::from_utf8(out.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert!(v["generated_seed"].is_u64());
}

#[test]
fn moran_runs_and_reports() {
    let dir = TempDir::new().unwrap();
    let params = write(
        dir.path(),
        "m.json",
        r#"{"N":200,"beta":0.5,"rhoBeta":2.0,"thetaA":0.0,"thetaB":0.0,
            "PA":[[0.5,0.5],[0.5,0.5]],"PB":[[0.5,0.5],[0.5,0.5]]}"#,
    );
    let init = write(dir.path(), "z.json", "[[100,0],[0,100]]");
    let traj = dir.path().join("t.jsonl");
    let out = twolocus(&[
        "sim",
        "moran",
        "--params",
        &params,
        "--init",
        &init,
        "--horizon",
        "0.5",
        "--dt",
        "0.25",
        "--reps",
        "4",
        "--seed",
        "5",
        "--out",
        traj.to_str().unwrap(),
    ]);
    let summary = stdout(&out);
    assert!(summary.contains("note"));
    assert_eq!(
        std::fs::read_to_string(&traj).unwrap().lines().count(),
        1 + 4 * 3
    );
}

#[test]
fn table1_small_run() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("r.json");
    let out = twolocus(&[
        "table1",
        "--enumerate",
        "4",
        "--rho",
        "25,50",
        "--lambda",
        "0,1,2",
        "--out",
        report.to_str().unwrap(),
    ]);
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2 * (2 + 2 + 1));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["configs"], 19);
    assert_eq!(v["errors"].as_array().unwrap().len(), 19 * 2 * 5);
}
