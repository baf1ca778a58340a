//! Helpers shared by the CLI integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod corpus;

use std::path::Path;
use std::process::{Command, Output};

use scrub_core::repo::{git, RepoBuilder};
use scrub_core::{RepoModel, Timestamp};
use sha2::{Digest, Sha256};

pub const SCRUB: &str = env!("CARGO_BIN_EXE_scrub");

/// A `scrub` invocation with no salt or NER service inherited from the caller.
pub fn scrub() -> Command {
    let mut cmd = Command::new(SCRUB);
    cmd.env_remove("SCRUB_SALT").env_remove("SCRUB_NER_URL").env("RUST_LOG", "error");
    cmd
}

pub fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("scrub binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or(serde_json::Value::Null)
}

pub fn describe(out: &Output) -> String {
    format!(
        "exit {}; stdout: {}; stderr: {}",
        code(out),
        String::from_utf8_lossy(&out.stdout).chars().take(400).collect::<String>(),
        String::from_utf8_lossy(&out.stderr).chars().take(400).collect::<String>()
    )
}

pub fn sha256_file(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).expect("readable file")))
}

pub fn write_bundle(model: &RepoModel, path: &Path) {
    git::write_bundle(model, path).expect("bundle written");
}

pub fn load(path: &Path) -> RepoModel {
    git::load_repository(path).expect("bundle loads")
}

/// Every object of a bundle as git itself decodes it, concatenated.
pub fn decoded_objects(bundle: &Path) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let mirror = dir.path().join("m.git");
    let st = Command::new("git")
        .args(["clone", "--quiet", "--mirror"])
        .arg(bundle)
        .arg(&mirror)
        .status()
        .expect("git runs");
    assert!(st.success(), "git clone of {} failed", bundle.display());
    let out = Command::new("git")
        .arg("-C")
        .arg(&mirror)
        .args(["cat-file", "--batch-all-objects", "--batch"])
        .output()
        .expect("git runs");
    assert!(out.status.success());
    out.stdout
}

pub fn contains(haystack: &[u8], needle: &str) -> bool {
    let n = needle.as_bytes();
    !n.is_empty() && haystack.windows(n.len()).any(|w| w == n)
}

/// C source with `lines` non-blank lines and nothing a detector reacts to.
pub fn filler_c(lines: usize) -> String {
    let mut out = String::from("#include <stdio.h>\n\n");
    let mut n = 1;
    let mut k = 0;
    while n < lines {
        let body = [
            format!("static int step_{k}(int x) {{"),
            format!("    int y = x * {} + {};", k % 7 + 2, k % 11),
            "    /* keep the running value small */".to_string(),
            format!("    if (y > {}) {{", 100 + k),
            "        y -= 3;".to_string(),
            "    }".to_string(),
            format!("    printf(\"step {k}: %d\\n\", y);"),
            "    return y;".to_string(),
            "}".to_string(),
        ];
        for l in body {
            if n == lines {
                break;
            }
            out.push_str(&l);
            out.push('\n');
            n += 1;
        }
        out.push('\n');
        k += 1;
    }
    out
}

/// One-commit repository with `files` at head.
pub fn single_commit(author: (&str, &str), files: &[(&str, &str)]) -> RepoModel {
    let mut b = RepoBuilder::new();
    let c = b.commit(&[], author, Timestamp::utc(1_700_000_000), "Initial import\n", files.iter().map(|(p, t)| (*p, t.as_bytes())));
    b.set_ref("refs/heads/main", c);
    b.build().unwrap()
}

/// An author identity that is already a pseudonym, so it never counts as a finding.
pub const MASKED_AUTHOR: (&str, &str) = ("Author_0123456789ab", "author_0123456789ab@example.invalid");
