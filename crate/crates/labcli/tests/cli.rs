use std::path::Path;
use std::process::Command;

use serde_json::Value;

const SMALL_MAIN: &str = "\
scenario = main_estimate
seed = 3
params.sigma = 1.5
params.lambda = 0.5
params.lambda_upper = 2.0
grid.half_width = 2.0
grid.n_points = 128
grid.t0 = -1.0
grid.t_end = 0.0
grid.n_steps = 256
operator.kind = linear
operator.kernel = dyadic
exterior.type = bounded-noise
exterior.amplitude = 1.0
exterior.correlation = 0.25
analysis.centers_x = -0.25, 0.0, 0.25
analysis.centers_t = -0.25, 0.0
output.stem = small
output.level_stride = 1
output.node_stride = 1
";

const LIMIT2: &str = "\
scenario = sigma2_limit
params.sigma = 1.5
grid.half_width = 4.0
grid.n_points = 256
exterior.type = gaussian
exterior.amplitude = 1.0
exterior.width = 1.0
limit2.sigmas = 1.9, 1.99
output.stem = lim
";

fn labcli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_labcli")).args(args).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn report(dir: &Path, stem: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.report.json"))).unwrap()).unwrap()
}

#[test]
fn selfcheck_exits_zero() {
    let (code, text) = labcli(&["selfcheck", "--seed", "5"]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("PASS"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_cfg(dir.path(), "bad.cfg", &format!("{LIMIT2}limit2.nonsense = 1\n"));
    let out = dir.path().join("o").to_string_lossy().into_owned();
    assert_eq!(labcli(&["simulate", "--config", &bad, "--out", &out]).0, 2);
    let dup = write_cfg(dir.path(), "dup.cfg", &format!("{LIMIT2}grid.n_points = 64\n"));
    assert_eq!(labcli(&["simulate", "--config", &dup, "--out", &out]).0, 2);
    assert_eq!(labcli(&["simulate", "--config", "/nonexistent.cfg", "--out", &out]).0, 2);
    // subcommand and scenario kind disagree
    let ok = write_cfg(dir.path(), "ok.cfg", LIMIT2);
    assert_eq!(labcli(&["limit2", "--config", &ok, "--out", &out]).0, 0);
    assert_eq!(labcli(&["liouville", "--config", &ok, "--out", &out]).0, 2);
}

#[test]
fn failed_assertion_exits_one_and_still_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "a.cfg", &format!("{LIMIT2}assert.limit_max_error = 1e-12\n"));
    let out = dir.path().join("o");
    let (code, text) = labcli(&["limit2", "--config", &cfg, "--out", &out.to_string_lossy()]);
    assert_eq!(code, 1, "{text}");
    let r = report(&out, "lim");
    assert_eq!(r["passed"], Value::Bool(false));
    assert_eq!(r["scenario"], "sigma2_limit");
    assert!(r["version"].is_string());
}

#[test]
fn divergent_exterior_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "l.cfg",
        "scenario = liouville\nparams.sigma = 1.5\ngrid.half_width = 2.0\ngrid.n_points = 32\ngrid.t0 = 0.0\n\
         grid.t_end = 16.0\ngrid.n_steps = 64\noperator.kind = pucci_plus\nexterior.type = power\n\
         exterior.coefficient = 1.0\nexterior.exponent = 1.8\n",
    );
    let (code, text) = labcli(&["liouville", "--config", &cfg, "--out", &dir.path().to_string_lossy()]);
    assert_eq!(code, 3, "{text}");
}

#[test]
fn reruns_are_bitwise_identical_and_seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "m.cfg", SMALL_MAIN);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for d in [&a, &b] {
        let (code, text) = labcli(&["simulate", "--config", &cfg, "--out", &d.to_string_lossy(), "--threads", "1"]);
        assert_eq!(code, 0, "{text}");
    }
    for f in ["small.trajectory.csv", "small.trajectory.json", "small.deviation.csv", "small.report.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    labcli(&["simulate", "--config", &cfg, "--out", &c.to_string_lossy(), "--seed", "99"]);
    let rc = report(&c, "small");
    assert_eq!(rc["config"]["seed"], 99);
    assert_ne!(
        std::fs::read(a.join("small.trajectory.csv")).unwrap(),
        std::fs::read(c.join("small.trajectory.csv")).unwrap()
    );
}

#[test]
fn analyze_reproduces_the_simulate_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "m.cfg", SMALL_MAIN);
    let (sim, ana) = (dir.path().join("sim"), dir.path().join("ana"));
    assert_eq!(labcli(&["simulate", "--config", &cfg, "--out", &sim.to_string_lossy()]).0, 0);
    let traj = sim.join("small.trajectory.csv");
    let (code, text) = labcli(&[
        "analyze",
        "--config",
        &cfg,
        "--trajectory",
        &traj.to_string_lossy(),
        "--out",
        &ana.to_string_lossy(),
    ]);
    assert_eq!(code, 0, "{text}");
    let (rs, ra) = (report(&sim, "small"), report(&ana, "small"));
    assert_eq!(rs["results"]["regularity"], ra["results"]["regularity"]);
    assert_eq!(rs["checks"], ra["checks"]);
    assert_eq!(
        std::fs::read(sim.join("small.deviation.csv")).unwrap(),
        std::fs::read(ana.join("small.deviation.csv")).unwrap()
    );
}
