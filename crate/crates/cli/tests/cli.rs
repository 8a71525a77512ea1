use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn rostop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rostop"))
        .args(args)
        .env_remove("ROSTOP_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn tmp(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn every_method_solves_the_fixture() {
    for method in ["enum", "bnb", "heuristic"] {
        let out = rostop(&["solve", "--instance", &fixture("two_path.instance"), "--method", method]);
        assert!(out.status.success(), "{method}: {}", String::from_utf8_lossy(&out.stderr));
        let text = stdout(&out);
        assert!(text.starts_with("sigma=(1,2) objective=6.0 "), "{method}: {text}");
    }
}

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (tmp(&dir, "a.csv"), tmp(&dir, "b.csv"));
    for path in [&a, &b] {
        let out = rostop(&["simulate", "--process", "threepoint", "--n", "50", "--seed", "9", "--out", path]);
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let c = tmp(&dir, "c.csv");
    rostop(&["simulate", "--process", "threepoint", "--n", "50", "--seed", "10", "--out", &c]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn exit_codes() {
    let out = rostop(&[
        "solve",
        "--instance",
        &fixture("two_path.instance"),
        "--method",
        "enum",
        "--enumeration-cap",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error["));

    assert_eq!(rostop(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(rostop(&["solve"]).status.code(), Some(1));
    assert_eq!(rostop(&["solve", "--instance", "/nonexistent/x.instance"]).status.code(), Some(1));
    assert_eq!(rostop(&["--help"]).status.code(), Some(0));
}

#[test]
fn paths_to_policy_round_trip() {
    let dir = TempDir::new().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/uniform.cfg");
    let config = config.to_string_lossy();
    let (paths, inst, sigma, eval) = (
        tmp(&dir, "paths.csv"),
        tmp(&dir, "inst.bin"),
        tmp(&dir, "sigma.csv"),
        tmp(&dir, "eval.csv"),
    );
    let steps: [&[&str]; 3] = [
        &["simulate", "--process", "uniform", "--config", &config, "--n", "40", "--seed", "3", "--out", &paths],
        &["build", "--paths", &paths, "--epsilon", "0.05", "--out", &inst],
        &["solve", "--instance", &inst, "--method", "heuristic", "--out", &sigma],
    ];
    for args in steps {
        let out = rostop(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }

    use rostop_core::heuristic::solve_heuristic;
    use rostop_core::pipeline::ProcessSpec;
    use rostop_core::RobustInstance;
    let sample = ProcessSpec::Uniform { horizon: 3 }.simulate(3, 40).unwrap();
    let direct = RobustInstance::build(&sample.paths, sample.rewards.clone(), 0.05).unwrap();
    let expected = solve_heuristic(&direct).unwrap();
    let written = std::fs::read_to_string(&sigma).unwrap();
    let got: Vec<usize> = written
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().trim().parse().unwrap())
        .collect();
    assert_eq!(got, expected.sigma.as_slice());

    let out = rostop(&["evaluate", "--instance", &inst, "--sigma", &sigma, "--test", &paths, "--out", &eval]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("mean="));
    assert_eq!(std::fs::read_to_string(&eval).unwrap().lines().count(), 41);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "process = threepoint\ntraining_sizes = 10\nepsilons = 0\nno_such_key = 1\n").unwrap();
    let out = rostop(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", &tmp(&dir, "r.csv")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn small_pipeline_writes_report() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("p.cfg");
    std::fs::write(
        &cfg,
        "process = threepoint\ntraining_sizes = 20,40\nvalidation_size = 100\ntest_size = 200\nepsilons = 0,0.5\nls_basis = one,prices\n",
    )
    .unwrap();
    let (report, curve) = (tmp(&dir, "r.csv"), tmp(&dir, "c.csv"));
    let out = rostop(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", &report, "--curve-out", &curve]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.starts_with("N,epsilon,solver,objective,val_mean,val_se,test_mean,test_se,seconds"));
    // Two sizes times two epsilons plus the baseline row.
    assert_eq!(text.lines().count(), 1 + 4 + 1);
    assert_eq!(std::fs::read_to_string(&curve).unwrap().lines().count(), 3);
}

#[test]
fn milp_export_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let files: Vec<PathBuf> = (0..2).map(|k| dir.path().join(format!("m{k}.lp"))).collect();
    for f in &files {
        let out = rostop(&["export-milp", "--instance", &fixture("two_path.instance"), "--out", f.to_str().unwrap()]);
        assert!(out.status.success());
    }
    let a = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(a, std::fs::read_to_string(&files[1]).unwrap());
    assert!(a.contains("Binaries") && a.contains("v0_"));

    let lean = dir.path().join("lean.lp");
    rostop(&[
        "export-milp",
        "--instance",
        &fixture("two_path.instance"),
        "--out",
        lean.to_str().unwrap(),
        "--without-valid-equalities",
    ]);
    assert!(!std::fs::read_to_string(&lean).unwrap().contains("v0_"));
}

#[test]
fn selftest_passes() {
    let out = rostop(&["selftest", "--cases", "20"]);
    assert!(out.status.success());
    assert!(!stdout(&out).contains("FAIL"));
}
