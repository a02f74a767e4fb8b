//! Writing study files and running the `expca` binary.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use expca_core::ExpressionMatrix;

pub fn expca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expca"))
        .args(args)
        .output()
        .expect("spawn expca")
}

/// Runs and panics with stderr unless the exit status is 0.
pub fn expca_ok(args: &[&str]) -> Output {
    let out = expca(args);
    assert!(
        out.status.success(),
        "expca {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Variable-major TSV, the on-disk orientation.
pub fn matrix_text(m: &ExpressionMatrix) -> String {
    let mut s = String::from("id");
    for o in m.observation_ids() {
        let _ = write!(s, "\t{o}");
    }
    s.push('\n');
    for (j, v) in m.variable_ids().iter().enumerate() {
        s.push_str(v);
        for i in 0..m.n_observations() {
            if m.missing()[(i, j)] {
                s.push_str("\tNA");
            } else {
                let _ = write!(s, "\t{:.17e}", m.values()[(i, j)]);
            }
        }
        s.push('\n');
    }
    s
}

pub fn design_text(pairs: impl IntoIterator<Item = (String, String)>) -> String {
    pairs.into_iter().map(|(o, g)| format!("{o}\t{g}\n")).collect()
}

pub fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

/// Data rows of a TSV output, skipping comments and the header.
pub fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}
