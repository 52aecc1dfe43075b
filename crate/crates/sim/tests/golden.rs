use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

fn aeqsim(args: &[&str]) -> Vec<u8> {
    let o = Command::new(env!("CARGO_BIN_EXE_aeqsim")).args(args).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    o.stdout
}

/// Compares against `tests/golden/<name>`; `AEQSIM_BLESS=1` rewrites it.
fn check(name: &str, got: &[u8]) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("AEQSIM_BLESS").is_some() {
        fs::write(&path, got).unwrap();
    }
    let want = fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(want == got, "{name} differs from golden:\n{}", String::from_utf8_lossy(got));
}

fn model(dir: &TempDir, shape: &str, seed: &str, timesteps: &str) -> PathBuf {
    let p = dir.path().join("net.ssnn");
    aeqsim(&["genmodel", "--shape", shape, "--seed", seed, "--timesteps", timesteps, "-o", p.to_str().unwrap()]);
    p
}

#[test]
fn seeded_report() {
    let dir = TempDir::new().unwrap();
    let m = model(&dir, "12x12-4C3-P3-3C3-F5", "2024", "3");
    let out =
        aeqsim(&["run", "-m", m.to_str().unwrap(), "--random-frames", "2", "--seed", "1", "--parallel", "2", "--clock", "100", "--verify"]);
    check("report_seed2024.txt", &out);
}

#[test]
fn seeded_trace() {
    let dir = TempDir::new().unwrap();
    let m = model(&dir, "5x5-1C3-F2", "5", "2");
    let t = dir.path().join("trace.txt");
    aeqsim(&["run", "-m", m.to_str().unwrap(), "--random-frames", "1", "--seed", "3", "--trace", t.to_str().unwrap()]);
    check("trace_seed5.txt", &fs::read(t).unwrap());
}
