//! The three submission channels and repository-name slugs.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::UNIX_EPOCH;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ScrubError};
use crate::repo::git::{load_git_dir, load_repository, write_bundle, Git};
use crate::repo::{RepoBuilder, RepoModel, Timestamp};

pub const INGEST_AUTHOR: (&str, &str) = ("Ingest Bot", "ingest@example.invalid");
pub const MB: f64 = (1u64 << 20) as f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Channel {
    Bundle,
    Archive,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LargeFile {
    pub path: String,
    pub size_mb: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub channel: Channel,
    pub slug: String,
    pub bundle_path: Option<PathBuf>,
    pub synthetic: bool,
    pub large_files: Vec<LargeFile>,
}

fn re(cell: &'static OnceLock<Regex>, pat: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pat).expect("static pattern"))
}

/// Scheme, `:` → `/`, userinfo. Each rewrite applies to the first match only.
fn normalize_remote(url: &str) -> String {
    static SCHEME: OnceLock<Regex> = OnceLock::new();
    static USERINFO: OnceLock<Regex> = OnceLock::new();
    let s = re(&SCHEME, r"[a-zA-Z]+://").replace(url, "");
    let s = s.replacen(':', "/", 1);
    re(&USERINFO, r"[^@]+@").replace(&s, "").into_owned()
}

fn drop_host(s: &str) -> &str {
    let path = s.split_once('/').map_or(s, |(_, rest)| rest);
    path.strip_prefix('/').unwrap_or(path)
}

fn finish(mut s: String) -> String {
    s = s.trim_matches(|c| c == '.' || c == '-').to_owned();
    if s.is_empty() {
        s = "repo".into();
    }
    if s.ends_with(".git") || s.ends_with(".atom") {
        s.push_str("-repo");
    }
    s
}

fn disallowed_to_dash(s: &str) -> String {
    static BAD: OnceLock<Regex> = OnceLock::new();
    re(&BAD, r"[^A-Za-z0-9.-]+").replace_all(s, "-").into_owned()
}

/// Path-preserving slug: `https://github.com/org/repo.git` → `org--repo`.
pub fn safe_name(url: &str) -> String {
    static SLASHES: OnceLock<Regex> = OnceLock::new();
    static DASHES: OnceLock<Regex> = OnceLock::new();
    let url = url.strip_suffix(".git").unwrap_or(url);
    let s = normalize_remote(url);
    let path = re(&SLASHES, "/+").replace_all(drop_host(&s), "--");
    let path = disallowed_to_dash(&path);
    // "--" is the segment separator, so only longer runs shrink.
    let path = re(&DASHES, "-{3,}").replace_all(&path, "--");
    finish(path.into_owned())
}

/// Last path segment only: `https://github.com/org/repo.git` → `repo`.
pub fn repo_only_name(url: &str) -> String {
    static DASHES: OnceLock<Regex> = OnceLock::new();
    let url = url.trim();
    let url = url.strip_suffix('/').unwrap_or(url);
    let url = url.strip_suffix(".git").unwrap_or(url);
    let s = normalize_remote(url);
    let path = drop_host(&s);
    let base = path.rsplit('/').next().unwrap_or(path);
    let base = disallowed_to_dash(base);
    finish(re(&DASHES, "-+").replace_all(&base, "-").into_owned())
}

pub fn pointer_text(size: u64, sha256_hex: &str) -> String {
    format!("scrub-lfs-pointer v1\nsize {size}\nsha256 {sha256_hex}\n")
}

fn io_err(path: &Path, e: std::io::Error) -> ScrubError {
    ScrubError::io(format!("cannot read {}", path.display()), e)
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| io_err(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// One synthetic commit holding every regular file under `dir`. Files
/// strictly larger than `threshold_mb` binary megabytes become pointer files.
pub fn ingest_archive(dir: &Path, threshold_mb: f64) -> Result<(RepoModel, IngestReport)> {
    let limit = threshold_mb * MB;
    let mut files = Vec::new();
    let mut large_files = Vec::new();
    let mut newest = 0i64;
    let walker = walkdir::WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || e.file_name() != ".git");
    for entry in walker {
        let entry = entry.map_err(|e| ScrubError::Config(format!("cannot walk {}: {e}", dir.display())))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let rel = path.strip_prefix(dir).expect("walk stays under root");
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let meta = entry.metadata().map_err(|e| ScrubError::Config(e.to_string()))?;
        if let Ok(m) = meta.modified() {
            if let Ok(d) = m.duration_since(UNIX_EPOCH) {
                newest = newest.max(d.as_secs() as i64);
            }
        }
        let size = meta.len();
        let bytes = if size as f64 > limit {
            large_files.push(LargeFile {
                path: rel.clone(),
                size_mb: (size as f64 / MB * 100.0).round() / 100.0,
            });
            pointer_text(size, &sha256_file(path)?).into_bytes()
        } else {
            fs::read(path).map_err(|e| io_err(path, e))?
        };
        files.push((rel, bytes));
    }
    if files.is_empty() {
        return Err(ScrubError::EmptyTree(dir.to_owned()));
    }
    let mut b = RepoBuilder::new();
    let c = b.commit(&[], INGEST_AUTHOR, Timestamp::utc(newest), "Import source archive\n", files);
    b.set_ref("refs/heads/main", c);
    let name = dir
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_default();
    let report = IngestReport {
        channel: Channel::Archive,
        slug: safe_name(&name),
        bundle_path: None,
        synthetic: true,
        large_files,
    };
    Ok((b.build()?, report))
}

/// Mirror-fetches every advertised ref, including pull and merge-request
/// refs, and points `HEAD` at the remote default branch.
pub fn ingest_remote(url: &str) -> Result<(RepoModel, IngestReport)> {
    let tmp = tempfile::tempdir().map_err(|e| ScrubError::io("cannot create temp dir", e))?;
    let mirror = tmp.path().join("mirror.git");
    fs::create_dir(&mirror).map_err(|e| ScrubError::io("cannot create mirror dir", e))?;
    let git = Git::new(&mirror);
    git.run(["init", "--bare", "--quiet"])?;
    git.run(["remote", "add", "origin", url])?;
    git.run(["config", "remote.origin.mirror", "true"])?;
    git.run(["config", "--unset-all", "remote.origin.fetch"]).ok();
    for spec in [
        "+refs/*:refs/*",
        "+refs/merge-requests/*:refs/merge-requests/*",
        "+refs/pull/*:refs/pull/*",
    ] {
        git.run(["config", "--add", "remote.origin.fetch", spec])?;
    }
    let fetch = git.output(["fetch", "--quiet", "--force", "--prune", "--prune-tags", "origin"])?;
    if !fetch.status.success() {
        return Err(ScrubError::Network {
            url: url.to_owned(),
            detail: String::from_utf8_lossy(&fetch.stderr).trim().to_owned(),
        });
    }
    let symref = git.output(["ls-remote", "--symref", "origin", "HEAD"])?;
    let remote_head = String::from_utf8_lossy(&symref.stdout)
        .lines()
        .find_map(|l| l.strip_prefix("ref: ").and_then(|r| r.split_whitespace().next()).map(str::to_owned));
    let head = match remote_head {
        Some(h) => Some(h),
        None => git
            .run(["for-each-ref", "--format=%(refname)", "refs/heads"])?
            .lines()
            .next()
            .map(str::to_owned),
    };
    if let Some(h) = head {
        git.output(["symbolic-ref", "HEAD", h.as_str()])?;
    }
    if !git.output(["show-ref", "--quiet"])?.status.success() {
        return Err(ScrubError::NoRefs(url.to_owned()));
    }
    let model = load_git_dir(&mirror)?;
    let report = IngestReport {
        channel: Channel::Remote,
        slug: safe_name(url),
        bundle_path: None,
        synthetic: false,
        large_files: Vec::new(),
    };
    Ok((model, report))
}

pub fn ingest_bundle(path: &Path) -> Result<(RepoModel, IngestReport)> {
    let model = load_repository(path)?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let report = IngestReport {
        channel: Channel::Bundle,
        slug: safe_name(&stem),
        bundle_path: None,
        synthetic: false,
        large_files: Vec::new(),
    };
    Ok((model, report))
}

/// Runs one channel and writes the resulting bundle to `out`.
pub fn ingest(channel: Channel, source: &str, out: &Path, threshold_mb: f64) -> Result<(RepoModel, IngestReport)> {
    let (model, mut report) = match channel {
        Channel::Bundle => ingest_bundle(Path::new(source))?,
        Channel::Archive => ingest_archive(Path::new(source), threshold_mb)?,
        Channel::Remote => ingest_remote(source)?,
    };
    write_bundle(&model, out)?;
    report.bundle_path = Some(out.to_owned());
    Ok((model, report))
}
