//! Every example runs to completion. `cargo test` builds the examples, so
//! the binaries sit next to the test executable.

use std::path::PathBuf;
use std::process::Command;

fn example(name: &str) -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let dir = exe.parent().unwrap().parent().unwrap().join("examples");
    dir.join(format!("{name}{}", std::env::consts::EXE_SUFFIX))
}

fn run(name: &str) -> String {
    let path = example(name);
    assert!(path.exists(), "example binary {} not built", path.display());
    let out = Command::new(&path).env("SUBHARNACK_WORKERS", "2").output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(out.status.success(), "{name} failed:\n{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    stdout
}

#[test]
fn moments() {
    let out = run("moments");
    assert!(out.contains("stable(theta=0.5)"));
    assert!(out.contains("no such moment") || out.contains("infinite moment"));
}

#[test]
fn subordinator_paths() {
    assert!(run("subordinator_paths").contains("strictly increasing: true"));
}

#[test]
fn sde_integrate() {
    assert!(run("sde_integrate").contains("P_T f(-1)"));
}

#[test]
fn coupling() {
    assert!(run("coupling").contains("coupled by T: 1.0000"));
}

#[test]
fn log_harnack() {
    let out = run("log_harnack");
    assert_eq!(out.matches("-> Certified").count(), 2, "{out}");
}

#[test]
fn power_harnack() {
    assert_eq!(run("power_harnack").matches("-> Certified").count(), 3);
}

#[test]
fn gradient() {
    assert_eq!(run("gradient").matches("-> Certified").count(), 4);
}

#[test]
fn rate_exponent() {
    assert!(run("rate_exponent").contains("stable(theta=0.75)"));
}

#[test]
fn galerkin() {
    let out = run("galerkin");
    assert!(out.contains("dimension-free: true") && out.contains("label withheld"), "{out}");
}

#[test]
fn run_config() {
    let out = run("run_config");
    assert!(out.contains("exit status 0") && out.contains("clock.bernstein.theta"), "{out}");
}
