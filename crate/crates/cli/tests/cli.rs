use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "n = 64\nprofile = round\nt_max_fraction = 0.99\nschedule = 0.5, 0.7, 0.9\n\
uniqueness_schedule = 0.5, 0.7, 0.9\nlgeo_schedule = 0.5, 0.7, 0.9\nlgeo_rows = 0, 0.1, 0.2\n";

fn kflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kflow"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn data_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

#[test]
fn bad_config_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    for (text, key) in [("n = 16\n", "n"), ("bogus = 1\n", "bogus"), ("tol_mass = -1\n", "tol_mass")] {
        let cfg = config(dir.path(), text);
        let out = kflow(dir.path(), &["flow", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&out.stderr).contains(key));
    }
}

#[test]
fn missing_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = kflow(dir.path(), &["heatback", "--traj", "absent.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn round_pipeline_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &format!("{SMALL}terminal = uniform\n"));
    let out = kflow(dir.path(), &["flow", "--config", &cfg, "--out", "flow"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for r in data_rows(&dir.path().join("flow/flow.csv")) {
        assert!((r[1] - r[2]).abs() < 1e-9, "volume law at t = {}", r[0]);
    }
    let traj = dir.path().join("flow/trajectory.json");
    let traj = traj.to_str().unwrap();
    let out = kflow(dir.path(), &["heatback", "--config", &cfg, "--traj", traj, "--out", "heat"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_rows(&dir.path().join("heat/solution.csv"));
    assert!(!rows.is_empty());
    // Uniform data on the round sphere stays uniform: u = 1/Vol.
    let t0 = rows[0][0];
    let first: Vec<f64> = rows.iter().filter(|r| r[0] == t0).map(|r| r[2]).collect();
    let spread = first.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - first.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1e-10 * first[0]);

    for r in data_rows(&dir.path().join("heat/mass.csv")) {
        assert!((r[1] - 1.0).abs() < 1e-6);
    }

    let sol = dir.path().join("heat/solution.csv");
    let out = kflow(
        dir.path(),
        &["entropy", "--config", &cfg, "--traj", traj, "--sol", sol.to_str().unwrap(), "--out", "ent"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ent/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    for r in data_rows(&dir.path().join("ent/entropy.csv")) {
        assert!(r[1].abs() < 1e-6, "W = {} at t = {}", r[1], r[0]);
    }
}

#[test]
fn lgeo_tables_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &format!("{SMALL}base_samples = 9\nlattice = 17\nstages = 16\n"));
    assert!(kflow(dir.path(), &["flow", "--config", &cfg, "--out", "flow"]).status.success());
    let out = kflow(dir.path(), &["lgeo", "--config", &cfg, "--traj", "flow/trajectory.json", "--out", "lg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["lgeo.csv", "lgeo_summary.csv", "lgeo_limit.csv", "reduced_volume.csv"] {
        assert!(!data_rows(&dir.path().join("lg").join(name)).is_empty(), "{name}");
    }
}

#[test]
fn flow_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "n = 64\nt_max_fraction = 0.99\nschedule = 0.5, 0.7, 0.9\n\
uniqueness_schedule = 0.5, 0.7, 0.9\nlgeo_schedule = 0.5, 0.7, 0.9\nlgeo_rows = 0, 0.1, 0.2\n");
    for out in ["a", "b"] {
        assert!(kflow(dir.path(), &["flow", "--config", &cfg, "--out", out]).status.success());
    }
    for name in ["trajectory.json", "flow.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(name)).unwrap(), "{name}");
    }
}

#[test]
fn zero_tolerances_fail_each_check_visibly() {
    let dir = tempfile::tempdir().unwrap();
    let zero = "tol_round = 0\ntol_area = 0\ntol_mass = 0\ntol_duality = 0\n";
    let small = "n = 64\nbase_samples = 9\nlattice = 17\nstages = 16\nlgeo_rows = 0, 0.3, 0.6, 0.9\n";
    let cfg = config(dir.path(), &format!("{small}{zero}"));
    let out = kflow(dir.path(), &["acceptance", "--config", &cfg, "--out", "acc"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    for id in 1..=10 {
        assert!(text.contains(&format!("criterion {id:>2} ")), "criterion {id} missing:\n{text}");
    }
    assert!(text.contains("criterion  1 FAIL") && text.contains("criterion  3 FAIL"), "{text}");
    assert!(dir.path().join("acc/acceptance.csv").exists());
}

#[test]
fn empty_solution_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    assert!(kflow(dir.path(), &["flow", "--config", &cfg, "--out", "flow"]).status.success());
    fs::write(dir.path().join("empty.csv"), "# t_i=0.5,horizon=0.5\nt,theta,u,f\n").unwrap();
    let out = kflow(
        dir.path(),
        &["entropy", "--config", &cfg, "--traj", "flow/trajectory.json", "--sol", "empty.csv"],
    );
    assert_eq!(out.status.code(), Some(3));
}
