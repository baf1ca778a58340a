//! Seeded fixture corpus: synthetic repositories with known sensitive values
//! planted across every surface the sanitizer covers.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scrub_core::repo::RepoBuilder;
use scrub_core::{CommitId, RepoModel, Timestamp};

use super::filler_c;

#[derive(Clone, Debug)]
pub struct Plant {
    pub value: String,
    pub surface: &'static str,
}

pub struct FixtureRepo {
    pub name: String,
    pub model: RepoModel,
    pub plants: Vec<Plant>,
}

pub struct Corpus {
    pub repos: Vec<FixtureRepo>,
    pub codenames: Vec<String>,
    pub people: Vec<String>,
}

const FIRST: &[&str] = &[
    "Ottoline", "Bartholomew", "Ysolde", "Cassius", "Perpetua", "Leopold", "Wilhelmina", "Ignatius",
    "Rosamund", "Thaddeus", "Clementine", "Evander", "Marguerite", "Ambrose", "Philippa", "Lysander",
];
const LAST: &[&str] = &[
    "Brackwater", "Quillfeather", "Okonkwo", "Vantreight", "Delacroix", "Marchbanks", "Fairweather",
    "Oyelaran", "Thistlewood", "Kowalczyk", "Abernethy", "Ravensworth", "Nakashima", "Featherstone",
];
const SYL_A: &[&str] = &["Vex", "Quor", "Zan", "Pryx", "Mordr", "Xylo", "Kreb", "Jovr", "Wulv", "Tzar"];
const SYL_B: &[&str] = &["marrow", "bellow", "quist", "fennox", "drake", "vault", "spindle", "gorse", "thane"];
const TLDS: &[&str] = &["corp", "internal", "local", "lan", "intra"];

struct Gen {
    rng: ChaCha8Rng,
    used: BTreeSet<String>,
}

impl Gen {
    fn token(&mut self, n: usize, alphabet: &[u8]) -> String {
        (0..n).map(|_| *alphabet.choose(&mut self.rng).unwrap() as char).collect()
    }

    fn fresh(&mut self, mut f: impl FnMut(&mut Self) -> String) -> String {
        loop {
            let v = f(self);
            if self.used.insert(v.clone()) {
                return v;
            }
        }
    }

    fn person(&mut self) -> String {
        self.fresh(|g| {
            format!("{} {}", FIRST.choose(&mut g.rng).unwrap(), LAST.choose(&mut g.rng).unwrap())
        })
    }

    fn codename(&mut self) -> String {
        self.fresh(|g| format!("{}{}", SYL_A.choose(&mut g.rng).unwrap(), SYL_B.choose(&mut g.rng).unwrap()))
    }

    fn email(&mut self) -> String {
        self.fresh(|g| {
            let local = g.token(7, b"abcdefghijklmnopqrstuvwxyz");
            let dom = g.token(6, b"abcdefghijklmnopqrstuvwxyz");
            format!("{local}.{}@{dom}-mail.net", g.rng.random_range(10..99))
        })
    }

    fn phone(&mut self) -> String {
        self.fresh(|g| format!("+44{}", g.token(10, b"0123456789")))
    }

    fn private_ip(&mut self) -> String {
        self.fresh(|g| {
            let r = &mut g.rng;
            format!("10.{}.{}.{}", r.random_range(1..250), r.random_range(1..250), r.random_range(2..250))
        })
    }

    fn internal_host(&mut self) -> String {
        self.fresh(|g| {
            let h = g.token(8, b"abcdefghijklmnopqrstuvwxyz");
            format!("{h}-svc.{}", TLDS.choose(&mut g.rng).unwrap())
        })
    }

    fn aws_key(&mut self) -> String {
        self.fresh(|g| format!("AKIA{}", g.token(16, b"ABCDEFGHIJKLMNOPQRSTUVWXYZ234567")))
    }

    fn github_token(&mut self) -> String {
        self.fresh(|g| format!("ghp_{}", g.token(36, b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789")))
    }

    fn password(&mut self) -> String {
        self.fresh(|g| g.token(14, b"abcdefghijkmnpqrstuvwxyzACDEFHJKLMNPRTUVWXY3479"))
    }
}

fn plant(plants: &mut Vec<Plant>, surface: &'static str, value: String) -> String {
    plants.push(Plant { value: value.clone(), surface });
    value
}

/// Lines of the head C file with the two code-file plants placed inside a
/// comment and a string literal.
fn head_c_source(base: &str, comment: &str, literal: &str) -> String {
    let mut lines: Vec<String> = base.lines().map(str::to_owned).collect();
    let at = lines.len() / 3;
    lines.insert(at, format!("/* escalation contact: {comment} */"));
    lines.insert(
        2 * lines.len() / 3,
        format!("static const char *UPSTREAM_KEY = \"{literal}\";"),
    );
    lines.join("\n") + "\n"
}

fn python_tool(extra: Option<&str>) -> String {
    let mut s = String::from("\"\"\"Report helpers.\"\"\"\n\nimport sys\n\n");
    for k in 0..12 {
        s.push_str(&format!("def summary_{k}(rows):\n    # total of column {k}\n    return sum(r[{k}] for r in rows)\n\n"));
    }
    if let Some(x) = extra {
        s.push_str(&format!("def owner():\n    \"\"\"Maintained by {x}.\"\"\"\n    return None\n"));
    }
    s
}

fn build_repo(g: &mut Gen, idx: usize, commits: usize, people: &mut Vec<String>, codenames: &mut Vec<String>) -> FixtureRepo {
    let mut plants = Vec::new();
    let base_c = filler_c(1100 + g.rng.random_range(0..200));

    let authors: Vec<(String, String)> = (0..g.rng.random_range(2..=3))
        .map(|_| (g.person(), g.email()))
        .collect();
    let a0 = &authors[0];
    plant(&mut plants, "author_name", a0.0.clone());
    plant(&mut plants, "author_email", a0.1.clone());

    // Working tree: code comment, code literal, config, docs.
    let rot = idx % 3;
    let comment_value = match rot {
        0 => plant(&mut plants, "wt_code_comment", g.email()),
        1 => plant(&mut plants, "wt_code_comment", g.phone()),
        _ => plant(&mut plants, "wt_code_comment", g.private_ip()),
    };
    let literal_value = match idx % 2 {
        0 => plant(&mut plants, "wt_code_string", g.aws_key()),
        _ => plant(&mut plants, "wt_code_string", g.github_token()),
    };
    let config = match idx % 3 {
        0 => format!("service:\n  password: \"{}\"\n  retries: 3\n", plant(&mut plants, "wt_config", g.password())),
        1 => format!("service:\n  db_host: {}\n  retries: 3\n", plant(&mut plants, "wt_config", g.internal_host())),
        _ => format!("service:\n  peer: {}\n  retries: 3\n", plant(&mut plants, "wt_config", g.private_ip())),
    };
    let readme_value = if idx.is_multiple_of(2) {
        let p = g.person();
        people.push(p.clone());
        plant(&mut plants, "wt_doc", p)
    } else {
        let c = g.codename();
        codenames.push(c.clone());
        plant(&mut plants, "wt_doc", c)
    };
    let readme = format!("# Project {idx}\n\nBuilt for the {readme_value} programme.\n");

    // Commit messages.
    let msg_a = match idx % 2 {
        0 => plant(&mut plants, "commit_message", g.email()),
        _ => plant(&mut plants, "commit_message", g.phone()),
    };
    let msg_b = if idx.is_multiple_of(2) {
        let c = g.codename();
        codenames.push(c.clone());
        plant(&mut plants, "commit_message", c)
    } else {
        let p = g.person();
        people.push(p.clone());
        plant(&mut plants, "commit_message", p)
    };

    // Historic blobs, regex-detectable classes only.
    let hist_contact = match idx % 2 {
        0 => plant(&mut plants, "history_blob", g.email()),
        _ => plant(&mut plants, "history_blob", g.phone()),
    };
    let hist_host = match idx % 2 {
        0 => plant(&mut plants, "history_blob", g.internal_host()),
        _ => plant(&mut plants, "history_blob", g.private_ip()),
    };

    for (name, _) in &authors {
        people.push(name.clone());
    }

    let head_c = head_c_source(&base_c, &comment_value, &literal_value);
    let base_lines: Vec<&str> = base_c.lines().collect();
    let feature = if commits >= 6 { 1 + idx % 2 } else { 0 };
    let main_len = commits - feature;
    let fork_at = main_len / 2 - 1;

    let mut b = RepoBuilder::new();
    let t0 = 1_600_000_000 + idx as i64 * 86_400;
    let mut main: Vec<CommitId> = Vec::new();
    let mut feature_tip: Option<CommitId> = None;
    let mut trees: HashMap<CommitId, Vec<(String, String)>> = HashMap::new();
    let mut ts = t0;
    for j in 0..main_len {
        ts += 3_600;
        let last = j + 1 == main_len;
        let (author_name, author_email) = &authors[j % authors.len()];
        let mut files: Vec<(String, String)> = Vec::new();
        if last {
            files.push(("src/engine.c".into(), head_c.clone()));
            files.push(("config/settings.yaml".into(), config.clone()));
            files.push(("README.md".into(), readme.clone()));
            let doc_person = if idx.is_multiple_of(4) { Some(readme_value.as_str()) } else { None };
            files.push(("tools/report.py".into(), python_tool(doc_person)));
        } else {
            let upto = base_lines.len() * (j + 1) / main_len;
            files.push(("src/engine.c".into(), base_lines[..upto].join("\n") + "\n"));
            files.push(("config/settings.yaml".into(), "service:\n  retries: 3\n".into()));
            files.push(("README.md".into(), format!("# Project {idx}\n")));
            files.push(("tools/report.py".into(), python_tool(None)));
        }
        if j == 0 {
            files.push(("notes/contacts.txt".into(), format!("on call: {hist_contact}\n")));
        }
        if j < main_len - 1 && j <= 1 {
            files.push(("deploy/hosts.txt".into(), format!("primary = {hist_host}\n")));
        } else if j < main_len - 1 {
            files.push(("deploy/hosts.txt".into(), "primary = localhost\n".into()));
        }
        let message = if last {
            format!("Release engine\n\nReviewed with {msg_b}; questions to {msg_a}.\n")
        } else if j == 0 {
            "Initial layout\n".to_string()
        } else {
            format!("Extend engine, part {j}\n")
        };
        if j >= fork_at + 2 && feature > 0 {
            files.push(("docs/feature.md".into(), format!("Feature step {}\n", feature - 1)));
        }
        let mut parents: Vec<CommitId> = main.last().cloned().into_iter().collect();
        if j == fork_at + 2 && feature > 0 {
            // The feature branch forks from main[fork_at] and merges here.
            let mut tip = main[fork_at].clone();
            for f in 0..feature {
                let fts = t0 + 3_600 * (fork_at as i64 + 1) + 600 * (f as i64 + 1);
                let mut ff = trees[&tip].clone();
                ff.retain(|(p, _)| p != "docs/feature.md");
                ff.push(("docs/feature.md".into(), format!("Feature step {f}\n")));
                let author = (authors[1].0.as_str(), authors[1].1.as_str());
                let msg = format!("Feature work {f}\n");
                tip = b.commit(&[tip], author, Timestamp::utc(fts), &msg, ff.clone());
                trees.insert(tip.clone(), ff);
            }
            feature_tip = Some(tip.clone());
            parents.push(tip);
        }
        let author = (author_name.as_str(), author_email.as_str());
        let c = b.commit(&parents, author, Timestamp::utc(ts), &message, files.clone());
        trees.insert(c.clone(), files);
        main.push(c);
    }
    b.set_ref("refs/heads/main", main.last().unwrap().clone());
    if let Some(tip) = feature_tip {
        b.set_ref("refs/heads/feature/report", tip);
    }
    b.set_ref("refs/tags/v0.1", main[main.len() / 2].clone());
    b.set_head("refs/heads/main");
    FixtureRepo { name: format!("fixture-{idx:02}"), model: b.build().unwrap(), plants }
}

/// `count` repositories with 3 to 50 commits; ten planted values each.
pub fn generate(seed: u64, count: usize) -> Corpus {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed), used: BTreeSet::new() };
    let mut people = Vec::new();
    let mut codenames = Vec::new();
    let repos = (0..count)
        .map(|i| {
            let commits = if count > 1 { 3 + i * 47 / (count - 1) } else { 3 };
            build_repo(&mut g, i, commits, &mut people, &mut codenames)
        })
        .collect();
    Corpus { repos, codenames, people }
}

/// Config file plus dictionary directory enabling the in-process NER stub.
pub fn write_config(corpus: &Corpus, dir: &Path) -> std::path::PathBuf {
    let dict = dir.join("dict");
    std::fs::create_dir_all(&dict).unwrap();
    std::fs::write(dict.join("codenames.txt"), corpus.codenames.join("\n") + "\n").unwrap();
    let cfg = serde_json::json!({
        "dict_dir": "dict",
        "ner": { "mode": "gazetteer", "gazetteer": corpus.people },
    });
    let path = dir.join("scrub.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}
