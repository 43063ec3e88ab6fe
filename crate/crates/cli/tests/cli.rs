use std::path::Path;
use std::process::{Command, Output};

use langevin_core::experiment::{matrix_blocks_from_csv, SweepTable};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_langevin-perturb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.ini");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const EXAMPLE: &str = "
[sweep]
gamma = 0.5, 2
mu = 0, 1, 10
[observable]
k = 2,0;0,1
[perturbation]
j = standard
";

#[test]
fn analytic_sweep_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), EXAMPLE);
    let out = dir.path().join("out");
    let res = run(&["analytic-sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let table = SweepTable::from_csv(&std::fs::read_to_string(out.join("analytic.csv")).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 6);
    let at_zero = table.rows.iter().find(|r| r.gamma == 2.0 && r.mu == 0.0).unwrap();
    assert!((at_zero.analytic_sigma2.unwrap() - 12.5).abs() < 1e-10);
    assert!(std::fs::read_to_string(out.join("analytic.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn mc_sweep_is_reproducible_and_seed_flag_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[dynamics]\ndt = 0.01\nt_end = 2\nburn_in = 0.5\n[sweep]\nmu = 0, 1\nreplications = 3\n[perturbation]\nj = standard\n",
    );
    let csv = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let res = run(&["mc-sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed, "--workers", "2"]);
        assert_eq!(res.status.code(), Some(0));
        std::fs::read(out.join("mc.csv")).unwrap()
    };
    assert_eq!(csv("a", "5"), csv("b", "5"));
    assert_ne!(csv("a", "5"), csv("c", "6"));
}

#[test]
fn design_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[target]\nprecision = 3,1;1,2\n[observable]\nk = 2,0;0,1\n");
    let out = dir.path().join("out");
    let res = run(&["design-j", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let blocks = matrix_blocks_from_csv(&std::fs::read_to_string(out.join("design.csv")).unwrap()).unwrap();
    let (s, j1, j2) = (&blocks["S"], &blocks["J1"], &blocks["J2"]);
    assert!((s * j1 * s - j2).amax() <= 1e-10);
    assert!(j1.amax() > 0.0);
}

#[test]
fn spectrum_and_overdamped_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{EXAMPLE}[spectrum]\nm_max = 2\n[overdamped]\neps = 0.2, 0.1\nseeds = 2\nt_end = 0.5\ndt = 0.05\n"),
    );
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    assert_eq!(run(&["spectrum", "--config", &cfg, "--out", o]).status.code(), Some(0));
    assert_eq!(run(&["overdamped-check", "--config", &cfg, "--out", o]).status.code(), Some(0));
    let spec = std::fs::read_to_string(out.join("spectrum.csv")).unwrap();
    assert!(spec.lines().nth(1) == Some("gamma,mu,nu,m,re,im,multiplicity"));
    let od = std::fs::read_to_string(out.join("overdamped.csv")).unwrap();
    assert_eq!(od.lines().count(), 2 + 4);
}

#[test]
fn config_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "[sweep]\nreplications = 0\n");
    assert_eq!(run(&["mc-sweep", "--config", &bad]).status.code(), Some(1));
    assert_eq!(run(&["mc-sweep"]).status.code(), Some(1));
    assert_eq!(run(&["mc-sweep", "--config", "/nonexistent/run.ini"]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn numerical_failures_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let diverging = write_config(
        dir.path(),
        "[dynamics]\nintegrator = baoab\ndt = 3\nt_end = 3000\nburn_in = 0\n[sweep]\nreplications = 2\n",
    );
    let res = run(&["mc-sweep", "--config", &diverging, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let table = SweepTable::from_csv(&std::fs::read_to_string(out.join("mc.csv")).unwrap()).unwrap();
    assert!(table.any_failed());

    let traced = write_config(dir.path(), "[spectrum]\nm_max = 9\n");
    assert_eq!(run(&["spectrum", "--config", &traced, "--out", out.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn bridge_preset_with_small_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[target]\nkind = bridge\ndim = 5\n[dynamics]\ndt = 0.01\nt_end = 1\nburn_in = 0.1\n[sweep]\ngamma = 1\nmu = 0, 1\nreplications = 2\n",
    );
    let out = dir.path().join("out");
    let res = run(&["bridge", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let meta = std::fs::read_to_string(out.join("metadata.txt")).unwrap();
    assert!(meta.contains("grid_source = preset choice"));
    let table = SweepTable::from_csv(&std::fs::read_to_string(out.join("bridge.csv")).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert!(table.rows.iter().all(|r| r.analytic_sigma2.is_none()));
}
