use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omd-bandit")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const CONFIG: &str = "\
algorithm = path_sum
arms = 3
horizon = 400
seeds = 0, 1
checkpoints = 100, 400
[environment]
kind = switching
switches = 3
";

fn write_config(dir: &Path) -> String {
    let p = dir.join("exp.cfg");
    std::fs::write(&p, CONFIG).unwrap();
    p.display().to_string()
}

#[test]
fn run_prints_regret_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let o = cli(&["run", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("checkpoint,mean_regret,std_regret,mean_regret_prefix_best,seeds\n"));
    assert_eq!(out.lines().count(), 3);
}

#[test]
fn output_file_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("res.csv");
    let o = cli(&["run", "--config", &cfg, "--output", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(out.exists());
    assert!(dir.path().join("res_diagnostics.csv").exists());
}

#[test]
fn flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let o = cli(&["run", "--config", &cfg, "--seeds", "0..5", "--checkpoints", "400"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().nth(1).unwrap().ends_with(",5"));
}

#[test]
fn flags_alone_suffice() {
    let o = cli(&[
        "run", "--algorithm", "best_of_both", "--eta", "auto", "--arms", "4", "--horizon", "300", "--env", "gap",
        "--env-param", "gap=0.3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_config_exits_nonzero() {
    let o = cli(&["run", "--algorithm", "variance", "--arms", "1", "--horizon", "2", "--env", "uniform"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("arms") && err.contains("horizon"), "{err}");
}

#[test]
fn strict_violation_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    assert!(!cli(&["run", "--config", &cfg, "--eta", "0.05", "--strict"]).status.success());
    assert!(cli(&["run", "--config", &cfg, "--eta", "0.05", "--permissive"]).status.success());
}

#[test]
fn game_and_sweep() {
    let o = cli(&["game", "--horizon", "500", "--seeds", "0..3", "--checkpoints", "100,500", "--env", "game"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("checkpoint,mean_gap,std_gap\n"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let o = cli(&["sweep", "--config", &cfg, "--param", "switches", "--values", "0,5,9"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1 + 3 * 2);
    assert!(!cli(&["sweep", "--config", &cfg, "--param", "gap", "--values", "0.1"]).status.success());
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    assert_eq!(stdout(&cli(&["run", "--config", &cfg])), stdout(&cli(&["run", "--config", &cfg])));
}

#[test]
fn oracle_report() {
    let o = cli(&["oracle"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("golden uncorrected round 3"));
}
