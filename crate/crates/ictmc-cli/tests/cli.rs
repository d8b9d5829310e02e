//! End-to-end tests of the binary: golden-file comparisons for the report
//! commands and the exit-code contract.
//!
//! Reports are byte-stable except for the `wall_ms` line, which is stripped
//! before comparison. Golden files live in tests/golden/.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ictmc"))
        .args(args)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .expect("binary runs")
}

fn stdout_normalized(out: &Output) -> String {
    let text = String::from_utf8(out.stdout.clone()).expect("utf-8 output");
    text.lines()
        .filter(|l| !l.starts_with("wall_ms:"))
        .map(|l| format!("{l}\n"))
        .collect()
}

fn assert_golden(name: &str, out: &Output, expected_code: i32) {
    assert_eq!(out.status.code(), Some(expected_code), "exit code for {name}");
    let got = stdout_normalized(out);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    let want = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("golden file {} missing: {e}", path.display()));
    assert_eq!(got, want, "golden mismatch for {name}");
}

#[test]
fn golden_check_reports() {
    assert_golden("check_symmetric.txt", &run(&["check", "tests/fixtures/symmetric.json"]), 0);
    assert_golden("check_absorbing.txt", &run(&["check", "tests/fixtures/absorbing.json"]), 0);
    assert_golden("check_interval.txt", &run(&["check", "tests/fixtures/interval.json"]), 0);
    // Negative verdict carries exit code 1 and a witness.
    assert_golden("check_zero.txt", &run(&["check", "tests/fixtures/zero.json"]), 1);
}

#[test]
fn golden_evaluate_reports() {
    assert_golden(
        "evaluate_symmetric.txt",
        &run(&[
            "evaluate",
            "tests/fixtures/symmetric.json",
            "--f",
            "0",
            "1",
            "--t",
            "1",
            "--tol",
            "1e-6",
        ]),
        0,
    );
    assert_golden(
        "evaluate_absorbing.txt",
        &run(&[
            "evaluate",
            "tests/fixtures/absorbing.json",
            "--f",
            "0",
            "1",
            "--t",
            "1",
            "--tol",
            "1e-6",
        ]),
        0,
    );
    assert_golden(
        "evaluate_interval.txt",
        &run(&[
            "evaluate",
            "tests/fixtures/interval.json",
            "--f",
            "0",
            "1",
            "--t",
            "20",
            "--tol",
            "1e-6",
        ]),
        0,
    );
}

#[test]
fn golden_graph_output() {
    assert_golden("graph_symmetric.dot", &run(&["graph", "tests/fixtures/symmetric.json"]), 0);
    assert_golden("graph_absorbing.dot", &run(&["graph", "tests/fixtures/absorbing.json"]), 0);
    assert_golden("graph_interval.dot", &run(&["graph", "tests/fixtures/interval.json"]), 0);
}

#[test]
fn evaluate_at_time_zero_echoes_f() {
    let out = run(&[
        "evaluate",
        "tests/fixtures/interval.json",
        "--f",
        "3",
        "-1",
        "--t",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_normalized(&out);
    assert!(text.contains("lower[s0]: 3.000000000"), "{text}");
    assert!(text.contains("lower[s1]: -1.000000000"), "{text}");
}

#[test]
fn evaluate_values_match_closed_form() {
    // (1 - e^{-2})/2 for the symmetric two-state chain.
    let out = run(&[
        "evaluate",
        "tests/fixtures/symmetric.json",
        "--f",
        "0",
        "1",
        "--t",
        "1",
        "--tol",
        "1e-6",
    ]);
    let text = stdout_normalized(&out);
    let line = text.lines().find(|l| l.starts_with("lower[s0]:")).expect("value line");
    let value: f64 = line.split(": ").nth(1).unwrap().parse().unwrap();
    let expect = (1.0 - (-2.0f64).exp()) / 2.0;
    assert!((value - expect).abs() < 2e-6, "{value} vs {expect}");
}

#[test]
fn limit_interval_converges_to_quarter() {
    let out = run(&[
        "limit",
        "tests/fixtures/interval.json",
        "--f",
        "0",
        "1",
        "--span-tol",
        "1e-5",
        "--tol",
        "1e-7",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_normalized(&out);
    let line = text.lines().find(|l| l.starts_with("value:")).expect("value line");
    let value: f64 = line.split(": ").nth(1).unwrap().parse().unwrap();
    assert!((value - 0.25).abs() < 1e-4, "{value}");
}

#[test]
fn limit_zero_model_exits_with_non_convergence() {
    let out = run(&[
        "limit",
        "tests/fixtures/zero.json",
        "--f",
        "0",
        "1",
        "--t-cap",
        "100",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let text = stdout_normalized(&out);
    assert!(text.contains("converged: false"), "{text}");
}

#[test]
fn input_errors_exit_with_code_two() {
    // Malformed document.
    let out = run(&["check", "tests/fixtures/malformed.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    // Dimension mismatch between --f and the state space.
    let out = run(&[
        "evaluate",
        "tests/fixtures/symmetric.json",
        "--f",
        "0",
        "1",
        "2",
        "--t",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Unsupported graph format.
    let out = run(&["graph", "tests/fixtures/symmetric.json", "--format", "svg"]);
    assert_eq!(out.status.code(), Some(2));

    // Missing file.
    let out = run(&["check", "tests/fixtures/no_such_file.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_contract() {
    let out = run(&["selftest", "--seed", "7", "--trials", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(stdout_normalized(&out).contains("result: pass"));

    // Negative control: the injected defect must be detected and fail.
    let out = run(&["selftest", "--seed", "7", "--trials", "2", "--inject-defect"]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout_normalized(&out);
    assert!(text.contains("check[injected_defect]: FAIL"), "{text}");

    // Zero trials is an input error.
    let out = run(&["selftest", "--trials", "0"]);
    assert_eq!(out.status.code(), Some(2));
}
