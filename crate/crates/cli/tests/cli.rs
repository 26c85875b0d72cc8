use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn balloc(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_balloc"))
        .args(args)
        .env("BALLOC_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn vector_two_choice() {
    let dir = tempfile::tempdir().unwrap();
    let o = balloc(&["vector", "two-choice", "4"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "0.0625,0.1875,0.3125,0.4375\nC1: pass (δ=1/4, ε=1/2), C2: pass (C=2)\n");
}

#[test]
fn vector_reports_condition_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = balloc(&["vector", "one-choice", "4", "--delta", "0.25", "--epsilon", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("C1: fail"));
}

#[test]
fn conductance_of_k4() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("k4.graph");
    fs::write(&g, "4 3\n1 2\n1 3\n1 4\n2 3\n2 4\n3 4\n").unwrap();
    let o = balloc(&["conductance", g.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "phi = 0.666667 (exact)\n");
}

#[test]
fn conductance_bounds_for_large_graph() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("c32.graph");
    let mut text = String::from("32 2\n");
    for i in 1..=32 {
        text.push_str(&format!("{} {}\n", i, i % 32 + 1));
    }
    fs::write(&g, text).unwrap();
    let o = balloc(&["conductance", g.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("phi in ["), "{}", stdout(&o));
}

#[test]
fn unknown_subcommand_and_bad_graph_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = balloc(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
    let g = dir.path().join("bad.graph");
    fs::write(&g, "3 2\n1 2\n").unwrap();
    assert_eq!(balloc(&["conductance", g.to_str().unwrap()], dir.path()).status.code(), Some(1));
}

const SWEEP: &str = "process = two-choice, one-choice\nn = 16, 32\nm = 4n\nrepetitions = 3\nseed = 5\nz = 1\nweights = exp1\n";

#[test]
fn simulate_is_deterministic_and_honours_seed_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    fs::write(&cfg, SWEEP).unwrap();
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(balloc(&["simulate", cfg, "--out", a.to_str().unwrap()], dir.path()).status.code(), Some(0));
    assert_eq!(balloc(&["simulate", cfg, "--out", b.to_str().unwrap()], dir.path()).status.code(), Some(0));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = dir.path().join("c.csv");
    assert_eq!(
        balloc(&["simulate", cfg, "--seed", "6", "--out", c.to_str().unwrap()], dir.path()).status.code(),
        Some(0)
    );
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    let text = fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("point,process,n,"));
    assert!(!text.contains('\r'));
}

#[test]
fn simulate_defaults_to_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    fs::write(&cfg, SWEEP).unwrap();
    let out = dir.path().join("results");
    let o = balloc(&["simulate", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("sweep.csv").exists());
}

#[test]
fn simulate_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, format!("{SWEEP}colour = blue\n")).unwrap();
    let o = balloc(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn drift_check_pass_and_precondition_failure() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.cfg");
    fs::write(&good, "n = 8, 16\ndelta = 0.25\nepsilon = 0.5\nvector = worst-case\ninstances = 5\n").unwrap();
    let o = balloc(&["drift-check", good.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("good-drift.csv")).unwrap();
    assert!(report.starts_with("label,inputs_hash,value,bound,slack,pass\n"));
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "n = 8\ndelta = 0.25\nepsilon = 0.5\nvector = one-choice\n").unwrap();
    let o = balloc(&["drift-check", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("C1"), "{}", stderr(&o));
}

#[test]
fn plot_writes_deterministic_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    fs::write(&cfg, SWEEP).unwrap();
    let csv = dir.path().join("t.csv");
    balloc(&["simulate", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap()], dir.path());
    let svg = |name: &str| {
        let out = dir.path().join(name);
        let spec = format!("x=step,y=gap,group=process,scale=log-x,out={}", out.display());
        let o = balloc(&["plot", csv.to_str().unwrap(), &spec], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read(out).unwrap()
    };
    assert_eq!(svg("a.svg"), svg("b.svg"));
    let o = balloc(&["plot", csv.to_str().unwrap(), "x=step,y=height"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn quick_selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = balloc(&["selftest", "--quick"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("pass ")));
}
