use std::path::Path;
use std::process::{Command, Output};

use orthext::formats;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orthext"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("running orthext")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn bytes(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn estimate_reproduces_the_phantom_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["phantom", "--n", "16", "--R", "7", "--method", "ls,at,twicing", "--out", "ph"]);
    for method in ["ls", "at", "twicing"] {
        let out = format!("{method}.coef");
        ok(dir, &["estimate", "--homolog", "ph/homolog.coef", "--acorr", "ph/truth.acorr", "--method", method, "--out", &out]);
        assert_eq!(bytes(dir, &out), bytes(dir, &format!("ph/{method}.coef")), "{method}");
    }
    ok(dir, &["synthesize", "at.coef", "--n", "16", "--out", "at.vol"]);
    assert_eq!(bytes(dir, "at.vol"), bytes(dir, "ph/at.vol"));
}

#[test]
fn family_zero_is_least_squares() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["expand", "--n", "16", "--R", "6", "--homolog", "--out", "h.coef"]);
    ok(dir, &["expand", "--n", "16", "--R", "6", "--out", "a.coef"]);
    ok(dir, &["autocorr", "a.coef", "--out", "a.acorr"]);
    let common = ["estimate", "--homolog", "h.coef", "--acorr", "a.acorr"];
    ok(dir, &[&common[..], &["--method", "ls", "--out", "ls.coef"]].concat());
    ok(dir, &[&common[..], &["--method", "family", "--t", "0", "--out", "f0.coef"]].concat());
    assert_eq!(bytes(dir, "ls.coef"), bytes(dir, "f0.coef"));
}

#[test]
fn single_row_blocks_are_rescaled_homolog_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["expand", "--n", "16", "--R", "3", "--homolog", "--out", "h.coef"]);
    ok(dir, &["expand", "--n", "16", "--R", "3", "--out", "a.coef"]);
    ok(dir, &["autocorr", "a.coef", "--out", "a.acorr"]);
    ok(dir, &["estimate", "--homolog", "h.coef", "--acorr", "a.acorr", "--method", "ls", "--out", "ls.coef"]);
    let h = formats::read_coefficients(dir.join("h.coef")).unwrap();
    let c = formats::read_autocorrelation(dir.join("a.acorr")).unwrap();
    let est = formats::read_coefficients(dir.join("ls.coef")).unwrap();
    let mut checked = 0;
    for l in 0..=h.max_degree() {
        let b = &h.blocks[l];
        if b.nrows() != 1 || b.ncols() < 2 {
            continue;
        }
        // the closest point to b on the sphere of radius sqrt(C_l)
        let expected = b.scale(c.blocks[l][(0, 0)].sqrt() / b.norm());
        assert!((&est.blocks[l] - &expected).norm() <= 1e-12 * expected.norm(), "l={l}");
        checked += 1;
    }
    assert!(checked >= 2);
}

#[test]
fn mismatched_bases_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["expand", "--n", "16", "--R", "6", "--homolog", "--out", "h.coef"]);
    ok(dir, &["expand", "--n", "16", "--R", "7", "--out", "a.coef"]);
    ok(dir, &["autocorr", "a.coef", "--out", "a.acorr"]);
    let out = run(dir, &["estimate", "--homolog", "h.coef", "--acorr", "a.acorr", "--method", "at", "--out", "x.coef"]);
    assert!(!out.status.success());
    assert!(!dir.join("x.coef").exists());
}

#[test]
fn bias_variance_output_and_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let csv = ok(dir, &["bias-variance", "--dim", "3", "--trials", "50", "--levels", "0.1", "--method", "ls,at"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "estimator,level,bias,rmse,variance,trials,stderr_bias");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("ls,") && lines[2].starts_with("at,"));

    assert!(!run(dir, &["bias-variance", "--levels", "0"]).status.success());
    assert!(!run(dir, &["bias-variance", "--method", "bogus"]).status.success());
    assert!(!run(dir, &["estimate", "--homolog", "missing.coef", "--acorr", "missing.acorr", "--method", "ls", "--out", "x"]).status.success());
}
