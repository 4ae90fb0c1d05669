//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criterion 12's FCR condition does not hold for this estimator under clean
//! autocorrelations (see the README); it is reported as FAIL and listed in
//! `KNOWN_FAILURES`. The process fails on any other failure, and also if a
//! known failure starts passing, so the list cannot go stale.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use orthext::autocorr::{covariance_from_autocorr, default_polar_rule, default_radial_rule};
use orthext::checks::{run_all, Budget, CheckOutcome};
use orthext::formats;

const KNOWN_FAILURES: &[u32] = &[12];

fn orthext(threads: usize, dir: &Path, args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_orthext"))
        .arg("--threads")
        .arg(threads.to_string())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("running orthext");
    assert!(
        out.status.success() || args[0] == "selftest",
        "orthext {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

/// Every file under `dir`, sorted, with its bytes.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        if f.is_dir() {
            for (name, bytes) in snapshot(&f) {
                out.push((format!("{}/{name}", f.file_name().unwrap().to_string_lossy()), bytes));
            }
        } else {
            out.push((f.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&f).unwrap()));
        }
    }
    out
}

/// Runs the whole command sequence in a fresh directory.
fn pipeline(threads: usize) -> Vec<(String, Vec<u8>)> {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut stdout = Vec::new();
    let mut run = |args: &[&str]| stdout.push((args.join(" "), orthext(threads, dir, args)));

    run(&["bias-variance", "--dim", "4", "--trials", "600", "--levels", "0.01,0.1", "--seed", "7", "--out", "bv.csv"]);
    run(&["bias-variance", "--dim", "3", "--trials", "300", "--field", "complex", "--method", "ls,at", "--method", "family", "--t", "3"]);
    run(&["phantom", "--n", "32", "--out", "ph"]);
    run(&["expand", "--n", "16", "--R", "7", "--homolog", "--out", "h.coef"]);
    run(&["expand", "--n", "16", "--R", "7", "--out", "a.coef"]);
    run(&["autocorr", "a.coef", "--out", "a.acorr"]);
    run(&["estimate", "--homolog", "h.coef", "--acorr", "a.acorr", "--method", "at", "--out", "at.coef"]);
    run(&["estimate", "--homolog", "h.coef", "--acorr", "a.acorr", "--method", "family", "--t", "4", "--out", "f4.coef"]);
    run(&["synthesize", "at.coef", "--n", "16", "--out", "at.vol"]);
    run(&["synthesize", "a.coef", "--n", "16", "--out", "a.vol"]);
    run(&["fcr", "at.vol", "a.vol", "--out", "fcr.csv"]);
    run(&["fcr", "ph/at.vol", "ph/truth.vol"]);

    // covariance-slice input, built from the archive just written
    let acorr = formats::read_autocorrelation(dir.join("a.acorr")).unwrap();
    let slice = covariance_from_autocorr(&acorr, default_radial_rule(&acorr.basis), default_polar_rule(&acorr.basis));
    formats::write_covslice(dir.join("a.covslice"), &slice).unwrap();
    run(&["autocorr", "a.covslice", "--R", "7", "--out", "from_slice.acorr"]);
    run(&["selftest"]);

    let mut all = snapshot(dir);
    all.extend(stdout.into_iter().map(|(k, v)| (format!("stdout of {k}"), v)));
    all
}

fn determinism() -> CheckOutcome {
    let start = Instant::now();
    let first = pipeline(1);
    let second = pipeline(1);
    let wide = pipeline(8);
    let mut diffs = Vec::new();
    for other in [&second, &wide] {
        if other.len() != first.len() {
            diffs.push(format!("{} vs {} outputs", first.len(), other.len()));
        }
        for ((n1, b1), (n2, b2)) in first.iter().zip(other.iter()) {
            if n1 != n2 || b1 != b2 {
                diffs.push(n1.clone());
            }
        }
    }
    diffs.dedup();
    let passed = diffs.is_empty();
    let detail = if passed {
        format!("{} outputs byte-identical across two 1-thread runs and an 8-thread run", first.len())
    } else {
        format!("differing outputs: {}", diffs.join(", "))
    };
    CheckOutcome {
        id: 13,
        name: "CLI outputs are deterministic",
        passed,
        detail,
        elapsed: start.elapsed(),
        time_limit: Duration::from_secs(600),
    }
}

fn main() -> ExitCode {
    let mut outcomes = run_all(Budget::full());
    outcomes.push(determinism());
    let mut unexpected = Vec::new();
    for o in &outcomes {
        println!("{}", o.line());
        let known = KNOWN_FAILURES.contains(&o.id);
        if o.ok() == known {
            unexpected.push(o.id);
        }
    }
    let passed = outcomes.iter().filter(|o| o.ok()).count();
    println!("{passed} of {} criteria passed", outcomes.len());
    if unexpected.is_empty() {
        if !KNOWN_FAILURES.is_empty() {
            println!("known failures: {KNOWN_FAILURES:?}");
        }
        ExitCode::SUCCESS
    } else {
        println!("unexpected results for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
