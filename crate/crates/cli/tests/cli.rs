//! Exit codes and file outputs of the `dfc` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn dfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dfc")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const PROG: &str = "vars h l; thread 0 { l := 1 {true}; output bot l {true} }";
const LEAKY: &str = "vars h l; thread 0 { l := h {true}; output bot l {true} }";
const POL: &str = "lattice { levels bot top; bot <= top; } labels { h: top; l: bot; }";

fn files(dir: &TempDir, prog: &str) -> (String, String) {
    let p = dir.path().join("p.prog");
    let q = dir.path().join("p.pol");
    fs::write(&p, prog).unwrap();
    fs::write(&q, POL).unwrap();
    (p.display().to_string(), q.display().to_string())
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

#[test]
fn pipeline_on_fig1_passes() {
    let o = dfc(&["pipeline", "--corpus", "fig1", "--bounds", "sched=6"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("oracle"));
}

#[test]
fn check_rejects_a_mutant() {
    let o = dfc(&["check", "--corpus", "fig1-swapped-modes", "--level", "bot"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("LAsgTy"));
}

#[test]
fn parse_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    let (p, _) = files(&dir, "vars x; thread 0 { x := }");
    let o = dfc(&["parse", &p]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn usage_errors_exit_3_and_help_exits_0() {
    assert_eq!(code(&dfc(&["frobnicate"])), 3);
    assert_eq!(code(&dfc(&["check", "--level"])), 3);
    assert_eq!(code(&dfc(&["--help"])), 0);
    assert_eq!(code(&dfc(&["corpus", "--show", "nope"])), 3);
}

#[test]
fn parse_prints_a_canonical_form_that_reparses() {
    let dir = TempDir::new().unwrap();
    let (p, q) = files(&dir, PROG);
    let o = dfc(&["parse", &p, &q]);
    assert_eq!(code(&o), 0);
    let again = dir.path().join("again.prog");
    fs::write(&again, stdout(&o)).unwrap();
    let o2 = dfc(&["parse", &again.display().to_string()]);
    assert_eq!(stdout(&o), stdout(&o2));
}

#[test]
fn check_and_oracle_agree_on_files() {
    let dir = TempDir::new().unwrap();
    let (p, q) = files(&dir, PROG);
    assert_eq!(code(&dfc(&["check", &p, &q])), 0);
    assert_eq!(code(&dfc(&["oracle", &p, &q, "--property", "system-security"])), 0);

    let (p, q) = files(&dir, LEAKY);
    assert_eq!(code(&dfc(&["check", &p, &q])), 1);
    let o = dfc(&["oracle", &p, &q, "--property", "system-security", "--level", "bot"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("replay: confirmed"), "{}", stdout(&o));
}

#[test]
fn vcs_derivations_and_reports_are_written() {
    let dir = TempDir::new().unwrap();
    let (p, q) = files(&dir, PROG);
    let vcs = path(&dir, "out.vcs");
    let rep = path(&dir, "vc.json");
    let o = dfc(&["verify-annotations", &p, &q, "--emit-vcs", &vcs, "--report", &rep]);
    assert_eq!(code(&o), 0);
    assert!(fs::read_to_string(&vcs).unwrap().lines().all(|l| l.starts_with("vc ")));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&rep).unwrap()).unwrap();
    assert!(json.is_object());

    let der = path(&dir, "der.txt");
    let rep = path(&dir, "check.json");
    let o = dfc(&["check", &p, &q, "--derivation", &der, "--report", &rep]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&der).unwrap();
    assert!(text.contains("SeqTy") && text.contains("OutTy"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(json["levels"].as_array().unwrap().len(), 2);
}

#[test]
fn run_dumps_the_trace() {
    let dir = TempDir::new().unwrap();
    let (p, q) = files(&dir, PROG);
    let o = dfc(&["run", &p, &q, "--schedule", "0,0", "--dump-trace"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("memory: h=0 l=1"), "{}", out);
    assert!(out.contains("out<bot,1"), "{}", out);
    assert_eq!(code(&dfc(&["run", &p, &q, "--schedule", "5"])), 3);
}

#[test]
fn infer_writes_an_annotated_program() {
    let dir = TempDir::new().unwrap();
    let (p, q) = files(&dir, PROG);
    let out = path(&dir, "inferred.prog");
    let o = dfc(&["infer", &p, &q, "--stabilize", "-o", &out]);
    assert_eq!(code(&o), 0);
    assert!(Path::new(&out).exists());
    assert_eq!(code(&dfc(&["verify-annotations", &out, &q])), 0);
}

#[test]
fn config_files_set_bounds() {
    let dir = TempDir::new().unwrap();
    let (p, q) = files(&dir, PROG);
    let cfg = path(&dir, "bounds.cfg");
    fs::write(&cfg, "# small\ndomain=2\nsched=3\n").unwrap();
    assert_eq!(code(&dfc(&["oracle", &p, &q, "--config", &cfg])), 0);
    fs::write(&cfg, "domain=zero\n").unwrap();
    assert_eq!(code(&dfc(&["oracle", &p, &q, "--config", &cfg])), 3);
}
