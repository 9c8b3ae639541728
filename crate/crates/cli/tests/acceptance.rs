use std::io::Write;
use std::process::Command;
use std::sync::OnceLock;

use perptail::{Conformance, CriterionOutcome};

fn suite() -> &'static Conformance {
    static SUITE: OnceLock<Conformance> = OnceLock::new();
    SUITE.get_or_init(|| Conformance::new(false).expect("embedded expectations"))
}

fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

fn check(id: u32) -> CriterionOutcome {
    let o = suite().criterion(id);
    report(&o.line());
    assert!(o.passed, "{}", o.line());
    o
}

#[test]
fn criterion_01_saddle_correctness() {
    check(1);
}

#[test]
fn criterion_02_expansion_conformance() {
    check(2);
}

#[test]
fn criterion_03_dickman_ground_truth() {
    check(3);
}

#[test]
fn criterion_04_density_tail_ratio() {
    check(4);
}

#[test]
fn criterion_05_tail_vs_exact_oracle() {
    check(5);
}

#[test]
fn criterion_06_de_bruijn_consistency() {
    check(6);
}

#[test]
fn criterion_07_mgf_by_simulation() {
    check(7);
}

#[test]
fn criterion_08_gamma_special_case() {
    check(8);
}

#[test]
fn criterion_09_large_s_limits() {
    check(9);
}

#[test]
fn criterion_10_legendre_equivalence() {
    check(10);
}

fn sim_json() -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_perptail"))
        .args([
            "sim", "--alpha", "1", "--law", "pointmass:b=1", "--paths", "20000", "--seed", "42",
            "--mgf-points", "0.5,1", "--format", "json",
        ])
        .output()
        .expect("run perptail");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

#[test]
fn criterion_11_simulation_determinism() {
    let library = suite().criterion(11);
    let (a, b) = (sim_json(), sim_json());
    let binary = !a.is_empty() && a == b;
    let passed = library.passed && binary;
    report(&format!(
        "criterion 11 {}  {}: library: {}; binary: two `sim --format json` runs, {} and {} bytes, identical = {binary}",
        if passed { "PASS" } else { "FAIL" },
        library.name,
        library.detail,
        a.len(),
        b.len(),
    ));
    assert!(passed);
}
