//! Synthetic inputs for the benchmarks.

use scrub_core::repo::RepoBuilder;
use scrub_core::{RepoModel, Timestamp};

/// C source of roughly `lines` lines; every tenth function carries an email
/// in a comment and a private address in a string.
pub fn c_source(lines: usize) -> String {
    let mut out = String::from("#include <stdio.h>\n");
    let mut k = 0;
    while out.lines().count() < lines {
        if k % 10 == 0 {
            out.push_str(&format!("/* owner: dev{k}@corp.example */\n"));
            out.push_str(&format!("static const char *HOST_{k} = \"10.0.{}.{}\";\n", k % 250, k % 200 + 1));
        }
        out.push_str(&format!(
            "int step_{k}(int x) {{\n    int y = x * {} + 1;\n    return y > 100 ? y - 3 : y;\n}}\n\n",
            k % 7 + 2
        ));
        k += 1;
    }
    out
}

/// Linear history of `commits` commits, each growing one C file.
pub fn repo(commits: usize, lines: usize) -> RepoModel {
    let source = c_source(lines);
    let all: Vec<&str> = source.lines().collect();
    let mut b = RepoBuilder::new();
    let mut parent = Vec::new();
    for j in 0..commits {
        let upto = all.len() * (j + 1) / commits;
        let text = all[..upto].join("\n") + "\n";
        let msg = format!("Step {j}, reviewed by ops{j}@corp.example\n");
        let c = b.commit(
            &parent,
            ("Dana Smith", "dana@corp.example"),
            Timestamp::utc(1_600_000_000 + j as i64 * 60),
            &msg,
            [("src/main.c", text), ("README.md", "# Demo\n".to_string())],
        );
        parent = vec![c];
    }
    b.set_ref("refs/heads/main", parent[0].clone());
    b.build().expect("valid synthetic repository")
}
