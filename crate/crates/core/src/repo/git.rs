//! Backend that shells out to the system `git` executable.
//!
//! Reading goes through a single long-lived `git cat-file --batch` process;
//! writing goes through `git fast-import` followed by `git bundle create`.
//! The executable is taken from `SCRUB_GIT_BIN`, falling back to `git` on
//! `PATH`.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsStr;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Output, Stdio};

use log::debug;

use super::{default_head, Blob, BlobId, Commit, CommitId, RepoModel, Timestamp, Tree};
use crate::error::{Result, ScrubError};

pub const GIT_BIN_ENV: &str = "SCRUB_GIT_BIN";

pub fn git_bin() -> String {
    std::env::var(GIT_BIN_ENV).unwrap_or_else(|_| "git".to_owned())
}

/// A `git` invocation rooted at one directory.
pub(crate) struct Git {
    bin: String,
    dir: PathBuf,
}

impl Git {
    pub(crate) fn new(dir: impl Into<PathBuf>) -> Self {
        Git {
            bin: git_bin(),
            dir: dir.into(),
        }
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new(&self.bin);
        cmd.arg("-C")
            .arg(&self.dir)
            .env("GIT_TERMINAL_PROMPT", "0")
            .env("GIT_CONFIG_NOSYSTEM", "1")
            .env("LC_ALL", "C");
        cmd
    }

    pub(crate) fn output<I, S>(&self, args: I) -> Result<Output>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<OsStr>,
    {
        self.command()
            .args(args)
            .stdin(Stdio::null())
            .output()
            .map_err(|e| ScrubError::Backend(format!("cannot run {}: {e}", self.bin)))
    }

    /// Runs and returns stdout, turning a non-zero exit into `Backend`.
    pub(crate) fn run<I, S>(&self, args: I) -> Result<String>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<OsStr>,
    {
        let args: Vec<S> = args.into_iter().collect();
        let out = self.output(&args)?;
        if !out.status.success() {
            let shown: Vec<_> = args.iter().map(|a| a.as_ref().to_string_lossy()).collect();
            return Err(ScrubError::Backend(format!(
                "git {} failed: {}",
                shown.join(" "),
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    }

    fn spawn(&self, args: &[&str]) -> Result<Child> {
        self.command()
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ScrubError::Backend(format!("cannot run {}: {e}", self.bin)))
    }
}

/// Loads a repository from a bundle file, a git directory (bare or not) or
/// a JSON-serialized model (`*.json`).
pub fn load_repository(source: &Path) -> Result<RepoModel> {
    load_repository_with_size(source).map(|(model, _)| model)
}

/// Like [`load_repository`], also returning the on-disk size in bytes of the
/// git object store the model was read from (0 for JSON sources).
pub fn load_repository_with_size(source: &Path) -> Result<(RepoModel, u64)> {
    let meta = fs::metadata(source)
        .map_err(|e| ScrubError::io(format!("cannot read {}", source.display()), e))?;
    if meta.is_dir() {
        let empty = fs::read_dir(source)
            .map_err(|e| ScrubError::io(format!("cannot list {}", source.display()), e))?
            .next()
            .is_none();
        if empty {
            return Err(ScrubError::EmptyRepository);
        }
        let git = Git::new(source);
        let git_dir = git
            .run(["rev-parse", "--absolute-git-dir"])
            .map_err(|_| ScrubError::MalformedBundle {
                path: source.to_owned(),
                detail: "not a git repository".into(),
            })?;
        let size = dir_size(Path::new(git_dir.trim()));
        return Ok((load_git_dir(source)?, size));
    }
    if source.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(source)
            .map_err(|e| ScrubError::io(format!("cannot read {}", source.display()), e))?;
        return Ok((RepoModel::from_json(&text)?, 0));
    }
    load_bundle(source)
}

fn load_bundle(bundle: &Path) -> Result<(RepoModel, u64)> {
    let tmp = tempfile::tempdir().map_err(|e| ScrubError::io("cannot create temp dir", e))?;
    let mirror = tmp.path().join("mirror.git");
    let abs = fs::canonicalize(bundle)
        .map_err(|e| ScrubError::io(format!("cannot resolve {}", bundle.display()), e))?;
    let out = Git::new(tmp.path()).output([
        OsStr::new("clone"),
        OsStr::new("--mirror"),
        OsStr::new("--quiet"),
        abs.as_os_str(),
        mirror.as_os_str(),
    ])?;
    if !out.status.success() {
        return Err(ScrubError::MalformedBundle {
            path: bundle.to_owned(),
            detail: String::from_utf8_lossy(&out.stderr).trim().to_owned(),
        });
    }
    let size = dir_size(&mirror);
    Ok((load_git_dir(&mirror)?, size))
}

pub(crate) fn dir_size(dir: &Path) -> u64 {
    walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .filter_map(|e| e.metadata().ok())
        .map(|m| m.len())
        .sum()
}

/// Reads every ref (annotated tags peeled to their commit) and everything
/// reachable from them.
pub fn load_git_dir(dir: &Path) -> Result<RepoModel> {
    let git = Git::new(dir);
    let listing = git.run([
        "for-each-ref",
        "--format=%(objectname) %(objecttype) %(*objectname) %(*objecttype) %(refname)",
    ])?;
    let mut native_refs: BTreeMap<String, String> = BTreeMap::new();
    for line in listing.lines() {
        let parts: Vec<&str> = line.splitn(5, ' ').collect();
        let [oid, kind, peeled, peeled_kind, name] = parts[..] else {
            continue;
        };
        let target = match (kind, peeled_kind) {
            ("commit", _) => oid,
            ("tag", "commit") => peeled,
            _ => {
                debug!("skipping ref {name}: not a commit");
                continue;
            }
        };
        native_refs.insert(name.to_owned(), target.to_owned());
    }
    if native_refs.is_empty() {
        return Err(ScrubError::EmptyRepository);
    }

    let mut reader = ObjectReader::open(&git)?;
    let mut commit_ids: HashMap<String, CommitId> = HashMap::new();
    let mut commits: BTreeMap<CommitId, Commit> = BTreeMap::new();
    let mut blobs: BTreeMap<BlobId, Blob> = BTreeMap::new();

    // Collect raw commits depth-first, then build them parents-first.
    let mut raw: HashMap<String, RawCommit> = HashMap::new();
    let mut stack: Vec<String> = native_refs.values().cloned().collect();
    while let Some(oid) = stack.pop() {
        if raw.contains_key(&oid) {
            continue;
        }
        let body = reader.read(&oid, "commit")?;
        let parsed = RawCommit::parse(&oid, &body)?;
        stack.extend(parsed.parents.iter().cloned());
        raw.insert(oid, parsed);
    }
    let mut order: Vec<String> = Vec::with_capacity(raw.len());
    let mut visited: HashMap<&str, bool> = HashMap::new();
    let mut roots: Vec<&String> = raw.keys().collect();
    roots.sort();
    for root in roots {
        // iterative post-order so parents land before children
        let mut work: Vec<(&str, bool)> = vec![(root.as_str(), false)];
        while let Some((oid, expanded)) = work.pop() {
            if expanded {
                order.push(oid.to_owned());
                continue;
            }
            if visited.insert(oid, true).is_some() {
                continue;
            }
            work.push((oid, true));
            for p in raw[oid].parents.iter().rev() {
                if !visited.contains_key(p.as_str()) {
                    work.push((p.as_str(), false));
                }
            }
        }
    }

    let mut tree_cache: HashMap<String, Vec<(String, String)>> = HashMap::new();
    let mut blob_ids: HashMap<String, BlobId> = HashMap::new();
    for oid in &order {
        let rc = &raw[oid];
        let entries = reader.flat_tree(&rc.tree, &mut tree_cache)?;
        let mut tree = Tree::new();
        for (path, blob_oid) in entries {
            let id = match blob_ids.get(&blob_oid) {
                Some(id) => id.clone(),
                None => {
                    let bytes = reader.read(&blob_oid, "blob")?;
                    let blob = Blob::new(bytes);
                    let id = blob.id.clone();
                    blobs.entry(id.clone()).or_insert(blob);
                    blob_ids.insert(blob_oid.clone(), id.clone());
                    id
                }
            };
            tree.insert(path, id);
        }
        let parents = rc.parents.iter().map(|p| commit_ids[p].clone()).collect();
        let commit = Commit::new(
            parents,
            rc.author_name.clone(),
            rc.author_email.clone(),
            rc.timestamp,
            rc.message.clone(),
            tree,
        );
        commit_ids.insert(oid.clone(), commit.id.clone());
        commits.insert(commit.id.clone(), commit);
    }
    reader.close();

    let refs: BTreeMap<String, CommitId> = native_refs
        .iter()
        .map(|(name, oid)| (name.clone(), commit_ids[oid].clone()))
        .collect();
    let symbolic = git
        .output(["symbolic-ref", "-q", "HEAD"])
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_owned());
    let head = match symbolic {
        Some(h) if refs.contains_key(&h) => h,
        _ => default_head(&refs).ok_or(ScrubError::EmptyRepository)?,
    };
    RepoModel::from_parts(commits, blobs, refs, head)
}

struct RawCommit {
    tree: String,
    parents: Vec<String>,
    author_name: String,
    author_email: String,
    timestamp: Timestamp,
    message: String,
}

impl RawCommit {
    fn parse(oid: &str, body: &[u8]) -> Result<Self> {
        let bad = |what: &str| ScrubError::Backend(format!("commit {oid}: {what}"));
        let split = body
            .windows(2)
            .position(|w| w == b"\n\n")
            .map(|i| (i, i + 2))
            .unwrap_or((body.len(), body.len()));
        let headers = String::from_utf8_lossy(&body[..split.0]);
        let message = String::from_utf8_lossy(&body[split.1..]).into_owned();
        let mut tree = None;
        let mut parents = Vec::new();
        let mut author = None;
        for line in headers.lines() {
            if let Some(rest) = line.strip_prefix("tree ") {
                tree = Some(rest.to_owned());
            } else if let Some(rest) = line.strip_prefix("parent ") {
                parents.push(rest.to_owned());
            } else if let Some(rest) = line.strip_prefix("author ") {
                author = Some(parse_ident(rest).ok_or_else(|| bad("unparseable author"))?);
            }
        }
        let (author_name, author_email, timestamp) = author.ok_or_else(|| bad("no author"))?;
        Ok(RawCommit {
            tree: tree.ok_or_else(|| bad("no tree"))?,
            parents,
            author_name,
            author_email,
            timestamp,
            message,
        })
    }
}

/// `Name <email> 1700000000 +0100`
fn parse_ident(s: &str) -> Option<(String, String, Timestamp)> {
    let gt = s.rfind('>')?;
    let lt = s[..gt].rfind('<')?;
    let name = s[..lt].trim_end().to_owned();
    let email = s[lt + 1..gt].to_owned();
    let mut rest = s[gt + 1..].split_whitespace();
    let seconds = rest.next()?.parse().ok()?;
    let offset_minutes = rest.next().and_then(Timestamp::parse_offset).unwrap_or(0);
    Some((
        name,
        email,
        Timestamp {
            seconds,
            offset_minutes,
        },
    ))
}

struct ObjectReader {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    stdout: BufReader<ChildStdout>,
}

impl ObjectReader {
    fn open(git: &Git) -> Result<Self> {
        let mut child = git.spawn(&["cat-file", "--batch"])?;
        let stdin = child.stdin.take().map(BufWriter::new);
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ObjectReader {
            child,
            stdin,
            stdout,
        })
    }

    fn read(&mut self, oid: &str, expect: &str) -> Result<Vec<u8>> {
        let broken = |e: std::io::Error| ScrubError::Backend(format!("cat-file: {e}"));
        let stdin = self.stdin.as_mut().expect("reader open");
        writeln!(stdin, "{oid}").map_err(broken)?;
        stdin.flush().map_err(broken)?;
        let mut header = String::new();
        self.stdout.read_line(&mut header).map_err(broken)?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (kind, size) = match fields[..] {
            [_, kind, size] => (kind, size.parse::<usize>().unwrap_or(0)),
            _ => {
                return Err(ScrubError::Backend(format!(
                    "object {oid} unavailable: {}",
                    header.trim()
                )))
            }
        };
        let mut body = vec![0u8; size + 1];
        self.stdout.read_exact(&mut body).map_err(broken)?;
        body.truncate(size);
        if kind != expect {
            return Err(ScrubError::Backend(format!(
                "object {oid} is a {kind}, expected {expect}"
            )));
        }
        Ok(body)
    }

    /// Flattens a tree into (path, blob oid) pairs. Submodule entries are
    /// skipped; symlinks are read as plain files.
    fn flat_tree(
        &mut self,
        oid: &str,
        cache: &mut HashMap<String, Vec<(String, String)>>,
    ) -> Result<Vec<(String, String)>> {
        if let Some(hit) = cache.get(oid) {
            return Ok(hit.clone());
        }
        let body = self.read(oid, "tree")?;
        let hash_len = oid.len() / 2;
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < body.len() {
            let sp = pos + body[pos..].iter().position(|&b| b == b' ').unwrap_or(0);
            let nul = sp + body[sp..].iter().position(|&b| b == 0).unwrap_or(0);
            if sp == pos || nul == sp || nul + 1 + hash_len > body.len() {
                return Err(ScrubError::Backend(format!("tree {oid} is corrupt")));
            }
            let mode = String::from_utf8_lossy(&body[pos..sp]).into_owned();
            let name = String::from_utf8_lossy(&body[sp + 1..nul]).into_owned();
            let child = hex::encode(&body[nul + 1..nul + 1 + hash_len]);
            pos = nul + 1 + hash_len;
            match mode.as_str() {
                "40000" | "040000" => {
                    for (path, blob) in self.flat_tree(&child, cache)? {
                        out.push((format!("{name}/{path}"), blob));
                    }
                }
                "160000" => debug!("skipping submodule {name}"),
                _ => out.push((name, child)),
            }
        }
        cache.insert(oid.to_owned(), out.clone());
        Ok(out)
    }

    fn close(mut self) {
        drop(self.stdin.take());
        let _ = self.child.wait();
    }
}

/// Writes the model as a bundle containing every ref plus `HEAD`.
///
/// The committer of every written commit equals its author. Packing runs
/// single-threaded so the same model always yields the same bundle bytes.
pub fn write_bundle(repo: &RepoModel, path: &Path) -> Result<()> {
    let tmp = tempfile::tempdir().map_err(|e| ScrubError::io("cannot create temp dir", e))?;
    let bare = tmp.path().join("out.git");
    write_git_dir(repo, &bare)?;
    if path.exists() {
        fs::remove_file(path)
            .map_err(|e| ScrubError::io(format!("cannot replace {}", path.display()), e))?;
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| ScrubError::io(format!("cannot create {}", parent.display()), e))?;
    }
    let target = std::path::absolute(path)
        .map_err(|e| ScrubError::io(format!("cannot resolve {}", path.display()), e))?;
    Git::new(&bare).run([
        OsStr::new("-c"),
        OsStr::new("pack.threads=1"),
        OsStr::new("bundle"),
        OsStr::new("create"),
        OsStr::new("--quiet"),
        target.as_os_str(),
        OsStr::new("--all"),
    ])?;
    Ok(())
}

/// Materializes the model as a fresh bare repository at `dir`.
pub fn write_git_dir(repo: &RepoModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| ScrubError::io(format!("cannot create {}", dir.display()), e))?;
    let git = Git::new(dir);
    git.run(["init", "--bare", "--quiet"])?;

    let mut child = git.spawn(&["fast-import", "--quiet"])?;
    let mut stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
    let stream_result = stream_fast_import(repo, &mut stdin);
    drop(stdin);
    let out = child
        .wait_with_output()
        .map_err(|e| ScrubError::Backend(format!("fast-import: {e}")))?;
    stream_result.map_err(|e| ScrubError::Backend(format!("fast-import stream: {e}")))?;
    if !out.status.success() {
        return Err(ScrubError::Backend(format!(
            "fast-import failed: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    git.run(["update-ref", "-d", SCRATCH_REF])?;
    git.run(["symbolic-ref", "HEAD", repo.head.as_str()])?;
    Ok(())
}

const SCRATCH_REF: &str = "refs/scrub-import/scratch";

fn stream_fast_import(repo: &RepoModel, out: &mut impl Write) -> std::io::Result<()> {
    let mut marks: HashMap<&BlobId, usize> = HashMap::new();
    let mut next = 1usize;
    let reachable = repo.reachable_commits();
    for id in &reachable {
        for blob_id in repo.commits[id].tree.values() {
            if marks.contains_key(blob_id) {
                continue;
            }
            let blob = &repo.blobs[blob_id];
            writeln!(out, "blob\nmark :{next}\ndata {}", blob.bytes.len())?;
            out.write_all(&blob.bytes)?;
            out.write_all(b"\n")?;
            marks.insert(blob_id, next);
            next += 1;
        }
    }
    let mut commit_marks: HashMap<&CommitId, usize> = HashMap::new();
    for id in repo.topo_order() {
        if !reachable.contains(id) {
            continue;
        }
        let c = &repo.commits[id];
        let ident = ident_line(c)?;
        if c.parents.is_empty() {
            writeln!(out, "reset {SCRATCH_REF}\n")?;
        }
        writeln!(out, "commit {SCRATCH_REF}\nmark :{next}")?;
        writeln!(out, "author {ident}\ncommitter {ident}")?;
        writeln!(out, "data {}", c.message.len())?;
        out.write_all(c.message.as_bytes())?;
        out.write_all(b"\n")?;
        for (i, p) in c.parents.iter().enumerate() {
            let verb = if i == 0 { "from" } else { "merge" };
            writeln!(out, "{verb} :{}", commit_marks[p])?;
        }
        writeln!(out, "deleteall")?;
        for (path, blob_id) in &c.tree {
            writeln!(out, "M 100644 :{} {}", marks[blob_id], quote_path(path))?;
        }
        writeln!(out)?;
        commit_marks.insert(id, next);
        next += 1;
    }
    for (name, tip) in &repo.refs {
        writeln!(out, "reset {name}\nfrom :{}\n", commit_marks[tip])?;
    }
    out.flush()
}

fn ident_line(c: &Commit) -> std::io::Result<String> {
    let invalid = |s: &str| s.contains(['<', '>', '\n']);
    if invalid(&c.author_name) || invalid(&c.author_email) {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("commit {} has an identity git cannot store", c.id),
        ));
    }
    let name = if c.author_name.is_empty() {
        String::new()
    } else {
        format!("{} ", c.author_name)
    };
    Ok(format!(
        "{name}<{}> {} {}",
        c.author_email,
        c.timestamp.seconds,
        c.timestamp.offset_string()
    ))
}

fn quote_path(path: &str) -> String {
    let mut q = String::with_capacity(path.len() + 2);
    q.push('"');
    for ch in path.chars() {
        match ch {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}
