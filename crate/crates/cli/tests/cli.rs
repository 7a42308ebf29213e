use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use ggflow_core::ValueFunction;
use serde_json::Value;
use tempfile::TempDir;

fn ggflow(args: &[&str], config: &Path, out: &Path) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_ggflow"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
        .status;
    status.code().expect("exited normally")
}

fn setup(text: &str) -> (TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, text).unwrap();
    (dir, cfg)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn classify_pendulum_and_degenerate() {
    let (dir, cfg) = setup("potential.name = pendulum\nsweep.x0_list = 0.25\n");
    let out = dir.path().join("out");
    assert_eq!(ggflow(&["classify"], &cfg, &out), 0);
    let r = read_json(&out.join("classification_000.json"));
    assert_eq!(r["report"]["verdict"], "EntersSingularSet");
    let tau = r["report"]["tau"].as_f64().unwrap();
    assert!((tau - 0.1403).abs() < 2e-3, "tau = {tau}");

    let (dir, cfg) = setup("potential.name = degenerate\nsweep.x0_list = 0.2\n");
    let out = dir.path().join("out");
    assert_eq!(ggflow(&["classify"], &cfg, &out), 0);
    let r = read_json(&out.join("classification_000.json"));
    assert_eq!(r["report"]["verdict"], "ApproachesRegularCritical");
    assert_eq!(r["report"]["tau"], "inf");
    let summary = fs::read_to_string(out.join("classification_summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().contains(",ApproachesRegularCritical,inf,"));
}

#[test]
fn solve_writes_a_readable_value_function() {
    let (dir, cfg) = setup("potential.name = degenerate\nsolver = distance\ngrid.n = 512\n");
    let out = dir.path().join("out");
    assert_eq!(ggflow(&["solve"], &cfg, &out), 0);
    let u = ValueFunction::read_csv(out.join("value_function.csv")).unwrap();
    assert_eq!(u.n(), 512);
    let report = read_json(&out.join("viscosity_report.json"));
    assert_eq!(report["viscosity"]["passes"], true);
    assert_eq!(report["provenance"], "distance-like");
    assert!(fs::read_to_string(out.join("value_function.svg")).unwrap().starts_with("<svg"));
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["resolved"]["viscosity"]["eq"], 1e-3);
    assert_eq!(manifest["resolved"]["n"], 512);
}

#[test]
fn flow_writes_trajectories_from_tabulated_potential() {
    let dir = tempfile::tempdir().unwrap();
    let n = 256;
    let mut table = format!("# 1,{n}\n");
    for i in 0..n {
        let x = i as f64 / n as f64;
        table.push_str(&format!("{}\n", -(2.0 * std::f64::consts::PI * x).cos()));
    }
    fs::write(dir.path().join("v.csv"), table).unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(
        &cfg,
        "potential.file = v.csv\nsolver = distance\ngrid.n = 256\nflow.t_max = 1\nsweep.x0_list = 0.3, 0.9\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    assert_eq!(ggflow(&["flow"], &cfg, &out), 0);
    for i in 0..2 {
        let csv = fs::read_to_string(out.join(format!("trajectory_{i:03}.csv"))).unwrap();
        assert!(csv.starts_with("t,x_1,p0_norm,u,d_crit,d_sing\n"));
        assert!(out.join(format!("trajectory_{i:03}.svg")).is_file());
    }
    let summary = fs::read_to_string(out.join("flow_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn lemma_suite_passes() {
    let (dir, cfg) = setup("potential.name = pendulum\nlemmas.cases = 300\n");
    let out = dir.path().join("out");
    assert_eq!(ggflow(&["lemmas", "--seed", "11"], &cfg, &out), 0);
    let r = read_json(&out.join("lemmas.json"));
    assert_eq!(r["seed"], 11);
    assert_eq!(r["a1"]["cases"], 300);
    assert_eq!(r["a1"]["violations"], 0);
    assert_eq!(r["a2"]["violations"], 0);
    assert_eq!(read_json(&out.join("manifest.json"))["seed"], 11);
}

#[test]
fn sweep_artifacts_are_byte_identical_across_runs() {
    let (dir, cfg) = setup("potential.name = pendulum\ngrid.n = 256\nsweep.count = 8\nsweep.seed = 5\n");
    let out = dir.path().join("out");
    assert_eq!(ggflow(&["sweep"], &cfg, &out), 0);
    let first = snapshot(&out);
    fs::remove_dir_all(&out).unwrap();
    assert_eq!(ggflow(&["sweep"], &cfg, &out), 0);
    assert_eq!(first, snapshot(&out));
    assert!(first.contains_key("sweep.csv") && first.contains_key("sweep.json"));
    let points = read_json(&out.join("manifest.json"))["resolved"]["initial_points"].clone();
    assert_eq!(points.as_array().unwrap().len(), 8);

    let other = dir.path().join("other");
    assert_eq!(ggflow(&["sweep", "--seed", "6"], &cfg, &other), 0);
    assert_ne!(first["sweep.csv"], fs::read(other.join("sweep.csv")).unwrap());
}

#[test]
fn usage_errors_exit_with_two() {
    for text in [
        "potential.name = pendulum\nflow.dt = 0.5\n",
        "potential.name = pendulum\nschedule = 100, 10, 1000\n",
        "potential.name = pendulum\ntol.crit = 0\n",
        "grid.n = 64\n",
        "potential.file = missing.csv\n",
        "potential.name = nowhere\n",
        "potential.name = pendulum\nsweep.x0_list = 0.1 0.2\n",
    ] {
        let (dir, cfg) = setup(text);
        let out = dir.path().join("out");
        assert_eq!(ggflow(&["classify"], &cfg, &out), 2, "config {text:?}");
    }
    let (dir, cfg) = setup("potential.name = pendulum\n");
    let out = dir.path().join("out");
    assert_eq!(ggflow(&["bogus"], &cfg, &out), 2);
    assert_eq!(ggflow(&["solve"], &dir.path().join("absent.cfg"), &out), 2);
}

#[test]
fn numerical_failure_keeps_partial_artifacts() {
    let (dir, cfg) = setup(
        "potential.name = pendulum2d\nsolver = laxoleinik\ngrid.n = 96\nviscosity.tol = 1e-6\n",
    );
    let out = dir.path().join("out");
    assert_eq!(ggflow(&["solve"], &cfg, &out), 1);
    assert!(out.join("value_function.csv").is_file());
    let report = read_json(&out.join("viscosity_report.json"));
    assert_eq!(report["viscosity"]["passes"], false);
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["status"], "failed");
    assert!(manifest["error"].as_str().unwrap().contains("viscosity"));
    assert!(manifest["resolved"]["lax_oleinik"]["max_iter"].is_number());
}
