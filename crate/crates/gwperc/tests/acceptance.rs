//! Full-scale verification suite: one test per criterion, each printing its
//! pass/fail line (visible under `cargo test -- --nocapture`). The same
//! runners back the `verify-all` CLI command.

use gwperc::acceptance::{run, Budget};

fn criterion(index: usize) {
    let result = run(index, Budget::Full);
    println!("{}", result.line());
    assert!(result.passed, "{}", result.line());
}

#[test]
fn criterion_01_annealed_kolmogorov() {
    criterion(1);
}

#[test]
fn criterion_02_deterministic_consistency() {
    criterion(2);
}

#[test]
fn criterion_03_quenched_kolmogorov() {
    criterion(3);
}

#[test]
fn criterion_04_quenched_yaglom() {
    criterion(4);
}

#[test]
fn criterion_05_quenched_iic_law() {
    criterion(5);
}

#[test]
fn criterion_06_exact_dp_oracle() {
    criterion(6);
}

#[test]
fn criterion_07_iic_marginal_oracle() {
    criterion(7);
}

#[test]
fn criterion_08_martingale_decay() {
    criterion(8);
}

#[test]
fn criterion_09_sandwich_bounds() {
    criterion(9);
}

#[test]
fn criterion_10_spread_diagnostics() {
    criterion(10);
}
