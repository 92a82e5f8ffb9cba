//! End-to-end tests of the binary: exit codes, output contracts, and
//! determinism.

use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_async-mimo"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Data rows of a CSV dump (metadata and header stripped).
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn rate_rerun_is_byte_identical() {
    let a = run(&["rate", "--theorem", "1", "--K", "5", "--M", "128"]);
    let b = run(&["rate", "--theorem", "1", "--K", "5", "--M", "128"]);
    let text = stdout(&a);
    assert_eq!(a.stdout, b.stdout);
    assert!(text.contains("receiver,user,rate,kappa,sinr,signal,isi,iui,noise"));
    assert!(text.contains("# config_hash = "));
    assert!(text.contains("# seed = 0"));
    assert!(text.contains("# tool = async-mimo "));
    assert_eq!(csv_rows(&text).len(), 5);
}

#[test]
fn montecarlo_matches_theory_within_five_percent() {
    let out = run(&["montecarlo", "--K", "5", "--M", "128", "--trials", "10000"]);
    let text = stdout(&out);
    assert!(text.contains("user,empirical,theory,stderr,rel_err"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 5);
    for row in rows {
        let rel: f64 = row[4].parse().unwrap();
        assert!(rel <= 0.05, "user {} rel_err {rel}", row[0]);
    }
}

#[test]
fn optimize_e_reproduces_reference_origins() {
    let out = run(&[
        "optimize-e",
        "--receiver",
        "mrc-perfect",
        "--pulse",
        "rect",
        "--K",
        "2..16",
    ]);
    let text = stdout(&out);
    assert!(text.contains("K,e_star,objective"));
    let expected = [0.18, 0.35, 0.41, 0.44, 0.45, 0.46, 0.46, 0.47];
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), expected.len());
    for (row, want) in rows.iter().zip(expected) {
        let e: f64 = row[1].parse().unwrap();
        assert!(
            (e - want).abs() <= 0.01,
            "K {}: e* {e}, want {want}",
            row[0]
        );
    }
}

#[test]
fn unknown_config_key_exits_two() {
    let out = run(&["rate", "--set", "link.bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unknown configuration key"), "{err}");
}

#[test]
fn invalid_field_exits_two_with_field_message() {
    let out = run(&["rate", "--set", "link.e=1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sampling origin"), "{err}");
}

#[test]
fn structurally_singular_mean_matrix_exits_three() {
    // The rectangular cross leakage spans too few basis functions for five
    // users, so the oversampled mean matrix cannot be inverted.
    let out = run(&["rate", "--theorem", "4", "--K", "5", "--pulse", "rect"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("conditioned"), "{err}");
    assert!(err.contains("estimate"), "{err}");
}

#[test]
fn config_file_with_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.conf");
    std::fs::write(&path, "link.K = 3 # three users\n\nlink.M = 32\n").unwrap();
    let out = run(&[
        "rate",
        "--theorem",
        "1",
        "--config",
        path.to_str().unwrap(),
        "--set",
        "link.e=0.3",
    ]);
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 3);

    let bad = std::fs::write(&path, "link.K\n");
    bad.unwrap();
    let out = run(&["rate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn json_mirrors_csv_rows() {
    let csv = stdout(&run(&["rate", "--theorem", "1", "--K", "2"]));
    let json = stdout(&run(&[
        "rate",
        "--theorem",
        "1",
        "--K",
        "2",
        "--format",
        "json",
    ]));
    assert!(json.contains("\"rows\": ["));
    assert!(json.contains("\"config_hash\""));
    // Same rate value rendered in both formats.
    let rate = &csv_rows(&csv)[0][2];
    assert!(json.contains(&format!("\"rate\": {rate}")), "{json}");
}

#[test]
fn output_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rates.csv");
    let direct = stdout(&run(&["rate", "--theorem", "2", "--K", "2", "--M", "16"]));
    let out = run(&[
        "rate",
        "--theorem",
        "2",
        "--K",
        "2",
        "--M",
        "16",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&path).unwrap(), direct);
}

#[test]
fn thread_cap_keeps_results_identical() {
    let plain = run(&["montecarlo", "--K", "2", "--M", "8", "--trials", "400"]);
    let capped = bin()
        .args(["montecarlo", "--K", "2", "--M", "8", "--trials", "400"])
        .env("ASYNC_MIMO_THREADS", "1")
        .output()
        .unwrap();
    assert!(capped.status.success());
    assert_eq!(plain.stdout, capped.stdout);

    let bad = bin()
        .args(["rate"])
        .env("ASYNC_MIMO_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn moments_and_power_scaling_contracts() {
    let text = stdout(&run(&[
        "moments",
        "--K",
        "2",
        "--receiver",
        "mrczf-perfect",
    ]));
    assert!(text.contains("quantity,index,value"));
    assert!(text.contains("eg,0,"));
    assert!(text.contains("zf_eps0,0,"));

    let text = stdout(&run(&[
        "power-scaling",
        "--receiver",
        "mrc-perfect",
        "--K",
        "2",
        "--scaling",
        "over-m",
        "--e-d",
        "100",
        "--M-list",
        "64,256",
    ]));
    assert!(text.contains("receiver,M,rho_d,user,rate,limit"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][1], "64");
    assert_eq!(rows[3][1], "256");
}
