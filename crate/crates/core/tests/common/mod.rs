#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn load_golden(name: &str) -> String {
    let path = fixture("golden").join(name);
    fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("failed to load golden file {}: {e}", path.display()))
}

/// Compare against a golden file, rewriting it when UPDATE_GOLDEN is set.
pub fn assert_golden(name: &str, actual: &str) {
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(fixture("golden").join(name), actual).expect("failed to update golden file");
        return;
    }
    let expected = load_golden(name);
    if actual != expected {
        for (i, (e, a)) in expected.lines().zip(actual.lines()).enumerate() {
            if e != a {
                eprintln!(
                    "first difference at line {}:\n  expected: {e}\n  actual:   {a}",
                    i + 1
                );
                break;
            }
        }
        panic!("golden file mismatch: {name}");
    }
}
