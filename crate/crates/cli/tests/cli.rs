use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn sbb(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbb")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, value: Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_vec_pretty(&value).unwrap()).unwrap();
    p
}

fn gaussian_pair(out: &Path) -> Value {
    serde_json::json!({
        "mu0": {"type": "gaussian", "mean": 0.0, "var": 0.25},
        "mu_T": {"type": "gaussian", "mean": 0.0, "var": 1.0},
        "solver": {"beta": 2.0, "horizon": 1.0},
        "out": out,
    })
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

fn without_timestamp(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn heat_flow_pair_has_zero_dual_value() {
    let tmp = tempfile::tempdir().unwrap();
    let sol = tmp.path().join("sol");
    let cfg = serde_json::json!({
        "mu0": {"type": "gaussian", "mean": 0.0, "var": 0.5},
        "mu_T": {"type": "gaussian", "mean": 0.0, "var": 1.5},
        "solver": {"beta": 2.0, "horizon": 1.0},
        "out": sol,
    });
    let c = write_config(tmp.path(), "heat.json", cfg);
    let out = sbb(&["solve", "--config", c.to_str().unwrap()], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = read_json(&sol.join("summary.json"));
    assert!(summary["dual_value"].as_f64().unwrap().abs() <= 1e-6);
    assert_eq!(summary["config"]["solver"]["beta"], 2.0);
}

#[test]
fn small_beta_t_is_rejected_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = gaussian_pair(&tmp.path().join("sol"));
    cfg["solver"]["horizon"] = 0.45.into();
    let c = write_config(tmp.path(), "bad.json", cfg);
    let out = sbb(&["solve", "--config", c.to_str().unwrap()], tmp.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("beta*T must exceed 1"), "{}", stderr(&out));
    assert!(!tmp.path().join("sol").exists());
}

#[test]
fn missing_marginal_file_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = gaussian_pair(&tmp.path().join("sol"));
    cfg["mu0"] = serde_json::json!({"type": "csv", "path": "absent.csv"});
    let c = write_config(tmp.path(), "missing.json", cfg);
    assert_eq!(code(&sbb(&["solve", "--config", c.to_str().unwrap()], tmp.path())), 1);
}

#[test]
fn tabulated_marginal_resolves_next_to_config() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rows = String::from("x,density\n");
    for i in 0..=400 {
        let x = -6.0 + 12.0 * i as f64 / 400.0;
        rows.push_str(&format!("{x},{}\n", (-x * x / 0.5).exp()));
    }
    fs::write(tmp.path().join("mu0.csv"), rows).unwrap();
    let mut cfg = gaussian_pair(&tmp.path().join("sol"));
    cfg["mu0"] = serde_json::json!({"type": "csv", "path": "mu0.csv"});
    let c = write_config(tmp.path(), "tab.json", cfg);
    let elsewhere = tempfile::tempdir().unwrap();
    let out = sbb(&["solve", "--config", c.to_str().unwrap()], elsewhere.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn nonconvergence_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = gaussian_pair(&tmp.path().join("sol"));
    cfg["solver"]["max_iter"] = 1.into();
    let c = write_config(tmp.path(), "short.json", cfg);
    assert_eq!(code(&sbb(&["solve", "--config", c.to_str().unwrap()], tmp.path())), 2);
}

#[test]
fn solve_simulate_validate_round() {
    let tmp = tempfile::tempdir().unwrap();
    let sol = tmp.path().join("sol");
    let c = write_config(tmp.path(), "g.json", gaussian_pair(&sol));
    let cs = c.to_str().unwrap();
    let ss = sol.to_str().unwrap();
    assert_eq!(code(&sbb(&["solve", "--config", cs], tmp.path())), 0);

    let first = sbb(&["simulate", "--out", ss, "--seed", "7"], tmp.path());
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let report = read_json(&sol.join("report.json"));
    assert!(report["timestamp"].is_u64());
    assert_eq!(report["config"]["paths"], 100_000);
    assert_eq!(report["duality"]["checked"], true);
    assert!(report["duality"]["gap"].as_f64().unwrap() <= report["duality"]["budget"].as_f64().unwrap());
    let dual = report["dual_value"].as_f64().unwrap();
    assert!(dual <= report["linear_bound"].as_f64().unwrap() + 1e-6);

    let again = sbb(&["simulate", "--out", ss, "--seed", "7"], tmp.path());
    assert_eq!(code(&again), 0);
    assert_eq!(without_timestamp(report), without_timestamp(read_json(&sol.join("report.json"))));

    let few = sbb(&["simulate", "--out", ss, "--paths", "10", "--emit-paths"], tmp.path());
    assert_eq!(code(&few), 0, "{}", stderr(&few));
    let report = read_json(&sol.join("report.json"));
    assert_eq!(report["duality"]["checked"], false);
    assert!(report["simulation"]["primal_cost_stderr"].as_f64().unwrap() > 0.0);
    let traj = fs::read_to_string(sol.join("trajectories.csv")).unwrap();
    assert!(traj.starts_with("path_id,t,Y,X,a,sigma\n"));
    assert_eq!(traj.lines().count(), 1 + 10 * 257);

    let v = sbb(&["validate", "--out", ss], tmp.path());
    assert_eq!(code(&v), 0, "{}", stderr(&v));
    let val = read_json(&sol.join("validation.json"));
    assert_eq!(val["degraded"].as_array().unwrap().len(), 0);
    assert_eq!(val["bound_holds"], true);
}

#[test]
fn trajectory_dump_is_capped() {
    let tmp = tempfile::tempdir().unwrap();
    let sol = tmp.path().join("sol");
    let mut cfg = gaussian_pair(&sol);
    cfg["solver"]["time_steps"] = 16.into();
    let c = write_config(tmp.path(), "g.json", cfg);
    assert_eq!(code(&sbb(&["solve", "--config", c.to_str().unwrap()], tmp.path())), 0);
    let out = sbb(&["simulate", "--config", c.to_str().unwrap(), "--paths", "1500", "--emit-paths"], tmp.path());
    assert!(matches!(code(&out), 0 | 3), "{}", stderr(&out));
    let traj = fs::read_to_string(sol.join("trajectories.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 1000 * 17);
}

#[test]
fn solution_files_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let c = write_config(tmp.path(), "g.json", gaussian_pair(d));
        assert_eq!(code(&sbb(&["solve", "--config", c.to_str().unwrap()], tmp.path())), 0);
    }
    for name in ["phi_hat.csv", "u.csv", "v.csv", "Ymap.csv", "Xmap.csv", "nu0.csv", "m_T.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn corrupt_solution_dir_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let sol = tmp.path().join("sol");
    let c = write_config(tmp.path(), "g.json", gaussian_pair(&sol));
    assert_eq!(code(&sbb(&["solve", "--config", c.to_str().unwrap()], tmp.path())), 0);
    fs::write(sol.join("phi_hat.csv"), "t,x,value\n1,2,oops\n").unwrap();
    assert_eq!(code(&sbb(&["simulate", "--out", sol.to_str().unwrap()], tmp.path())), 1);
    assert_eq!(code(&sbb(&["validate", "--out", sol.to_str().unwrap()], tmp.path())), 1);
    assert_eq!(code(&sbb(&["simulate", "--out", tmp.path().join("none").to_str().unwrap()], tmp.path())), 1);
}

#[test]
fn sweep_dual_column_is_nondecreasing_in_beta() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = gaussian_pair(&tmp.path().join("sweep"));
    cfg["paths"] = 2000.into();
    cfg["sinkhorn"] = true.into();
    let c = write_config(tmp.path(), "s.json", cfg);
    let out = sbb(&["sweep-beta", "--config", c.to_str().unwrap(), "--beta", "1.5,2,4,8"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(tmp.path().join("sweep/sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "beta,T,dual_value,primal_cost,drift_energy,diffusion_energy,martingale_slope,sinkhorn_value,status"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    let duals: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(duals.windows(2).all(|w| w[1] >= w[0]), "{duals:?}");
    for r in &rows {
        assert_eq!(r[8], "ok");
        let sb: f64 = r[7].parse().unwrap();
        assert!(r[2].parse::<f64>().unwrap() <= sb + 1e-4);
    }
    let summary = read_json(&tmp.path().join("sweep/sweep.json"));
    assert_eq!(summary["config"]["sweep"].as_array().unwrap().len(), 4);
}

#[test]
fn sweep_edge_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = gaussian_pair(&tmp.path().join("sweep"));
    let c = write_config(tmp.path(), "s.json", cfg.clone());
    let cs = c.to_str().unwrap();
    assert_eq!(code(&sbb(&["sweep-beta", "--config", cs], tmp.path())), 1);
    assert_eq!(code(&sbb(&["sweep-beta", "--config", cs, "--beta", ""], tmp.path())), 1);
    let bad = sbb(&["sweep-beta", "--config", cs, "--beta", "2,0.5"], tmp.path());
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("beta*T must exceed 1"));

    cfg["solver"]["max_iter"] = 1.into();
    cfg["paths"] = 100.into();
    let c = write_config(tmp.path(), "f.json", cfg);
    let out = sbb(&["sweep-beta", "--config", c.to_str().unwrap(), "--beta", "2:1,4:1"], tmp.path());
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    let text = fs::read_to_string(tmp.path().join("sweep/sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().skip(1).all(|l| l.contains("failed")));
}
