//! In-memory repository model: a content-addressed commit DAG with refs,
//! flat path→blob trees and raw blobs.
//!
//! Ids in this model are always SHA-256 digests over a canonical,
//! length-prefixed serialization, so the model never depends on the
//! external version-control tool for identity. The [`git`] backend
//! translates to and from real repositories and bundles.

pub mod git;
mod rewrite;

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ScrubError};

pub use rewrite::{rewrite_history, RewriteCallbacks};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlobId(pub String);

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommitId(pub String);

impl fmt::Display for BlobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for CommitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl BlobId {
    pub fn of(bytes: &[u8]) -> Self {
        BlobId(hex::encode(Sha256::digest(bytes)))
    }
}

/// A blob is text iff it decodes as UTF-8 and has no NUL byte.
pub fn is_text(bytes: &[u8]) -> bool {
    !bytes.contains(&0) && std::str::from_utf8(bytes).is_ok()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blob {
    pub id: BlobId,
    #[serde(with = "base64_bytes")]
    pub bytes: Vec<u8>,
    pub is_text: bool,
}

impl Blob {
    pub fn new(bytes: Vec<u8>) -> Self {
        Blob {
            id: BlobId::of(&bytes),
            is_text: is_text(&bytes),
            bytes,
        }
    }

    pub fn text(&self) -> Option<&str> {
        if self.is_text {
            std::str::from_utf8(&self.bytes).ok()
        } else {
            None
        }
    }
}

/// Seconds since the epoch plus the author's UTC offset in minutes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub seconds: i64,
    pub offset_minutes: i32,
}

impl Timestamp {
    pub fn utc(seconds: i64) -> Self {
        Timestamp {
            seconds,
            offset_minutes: 0,
        }
    }

    /// `+hhmm` / `-hhmm`, as written in commit headers.
    pub fn offset_string(&self) -> String {
        let sign = if self.offset_minutes < 0 { '-' } else { '+' };
        let abs = self.offset_minutes.unsigned_abs();
        format!("{sign}{:02}{:02}", abs / 60, abs % 60)
    }

    pub fn parse_offset(s: &str) -> Option<i32> {
        let (sign, digits) = match s.as_bytes().first()? {
            b'+' => (1, &s[1..]),
            b'-' => (-1, &s[1..]),
            _ => return None,
        };
        if digits.len() != 4 || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let hours: i32 = digits[..2].parse().ok()?;
        let minutes: i32 = digits[2..].parse().ok()?;
        Some(sign * (hours * 60 + minutes))
    }
}

pub type Tree = BTreeMap<String, BlobId>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commit {
    pub id: CommitId,
    pub parents: Vec<CommitId>,
    pub author_name: String,
    pub author_email: String,
    pub timestamp: Timestamp,
    pub message: String,
    pub tree: Tree,
}

impl Commit {
    pub fn new(
        parents: Vec<CommitId>,
        author_name: impl Into<String>,
        author_email: impl Into<String>,
        timestamp: Timestamp,
        message: impl Into<String>,
        tree: Tree,
    ) -> Self {
        let mut commit = Commit {
            id: CommitId(String::new()),
            parents,
            author_name: author_name.into(),
            author_email: author_email.into(),
            timestamp,
            message: message.into(),
            tree,
        };
        commit.id = commit.compute_id();
        commit
    }

    /// SHA-256 over every field except `id`, each field length-prefixed.
    pub fn compute_id(&self) -> CommitId {
        fn field(h: &mut Sha256, bytes: &[u8]) {
            h.update((bytes.len() as u64).to_be_bytes());
            h.update(bytes);
        }
        let mut h = Sha256::new();
        field(&mut h, b"scrub-commit-v1");
        h.update((self.parents.len() as u64).to_be_bytes());
        for p in &self.parents {
            field(&mut h, p.0.as_bytes());
        }
        field(&mut h, self.author_name.as_bytes());
        field(&mut h, self.author_email.as_bytes());
        h.update(self.timestamp.seconds.to_be_bytes());
        h.update(self.timestamp.offset_minutes.to_be_bytes());
        field(&mut h, self.message.as_bytes());
        h.update((self.tree.len() as u64).to_be_bytes());
        for (path, blob) in &self.tree {
            field(&mut h, path.as_bytes());
            field(&mut h, blob.0.as_bytes());
        }
        CommitId(hex::encode(h.finalize()))
    }
}

/// Immutable after construction; every constructor validates the invariants
/// (refs resolve, head is a ref, parents and tree entries resolve, ids are
/// digests, the graph is acyclic).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoModel {
    pub commits: BTreeMap<CommitId, Commit>,
    pub blobs: BTreeMap<BlobId, Blob>,
    pub refs: BTreeMap<String, CommitId>,
    pub head: String,
}

impl RepoModel {
    pub fn from_parts(
        commits: BTreeMap<CommitId, Commit>,
        blobs: BTreeMap<BlobId, Blob>,
        refs: BTreeMap<String, CommitId>,
        head: String,
    ) -> Result<Self> {
        let model = RepoModel {
            commits,
            blobs,
            refs,
            head,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.refs.is_empty() {
            return Err(ScrubError::EmptyRepository);
        }
        let bad = |msg: String| Err(ScrubError::InvalidModel(msg));
        if !self.refs.contains_key(&self.head) {
            return bad(format!("head {} is not a ref", self.head));
        }
        for (name, target) in &self.refs {
            if !self.commits.contains_key(target) {
                return bad(format!("ref {name} points at unknown commit {target}"));
            }
        }
        for (id, blob) in &self.blobs {
            if *id != blob.id || BlobId::of(&blob.bytes) != *id {
                return bad(format!("blob {id} does not match its content digest"));
            }
        }
        for (id, commit) in &self.commits {
            if *id != commit.id || commit.compute_id() != *id {
                return bad(format!("commit {id} does not match its content digest"));
            }
            for p in &commit.parents {
                if !self.commits.contains_key(p) {
                    return bad(format!("commit {id} has unknown parent {p}"));
                }
            }
            for (path, blob) in &commit.tree {
                if !self.blobs.contains_key(blob) {
                    return bad(format!("commit {id} path {path} has unknown blob {blob}"));
                }
            }
        }
        if self.topo_order().len() != self.commits.len() {
            return bad("commit graph has a cycle".into());
        }
        Ok(())
    }

    pub fn head_commit(&self) -> &Commit {
        &self.commits[&self.refs[&self.head]]
    }

    pub fn blob(&self, id: &BlobId) -> &Blob {
        &self.blobs[id]
    }

    /// Parents strictly before children. Ties are broken by timestamp, then
    /// id, so the order is a pure function of the model.
    pub fn topo_order(&self) -> Vec<&CommitId> {
        let mut pending: HashMap<&CommitId, usize> = HashMap::new();
        let mut children: HashMap<&CommitId, Vec<&CommitId>> = HashMap::new();
        for (id, c) in &self.commits {
            let known: Vec<&CommitId> = c
                .parents
                .iter()
                .filter(|p| self.commits.contains_key(*p))
                .collect();
            pending.insert(id, known.len());
            for p in known {
                children.entry(p).or_default().push(id);
            }
        }
        let key = |id: &CommitId| (self.commits[id].timestamp.seconds, id.clone());
        let mut ready: BinaryHeap<Reverse<(i64, CommitId)>> = pending
            .iter()
            .filter(|(_, n)| **n == 0)
            .map(|(id, _)| Reverse(key(id)))
            .collect();
        let mut out = Vec::with_capacity(self.commits.len());
        while let Some(Reverse((_, id))) = ready.pop() {
            let (id_ref, _) = self.commits.get_key_value(&id).expect("known commit");
            out.push(id_ref);
            for child in children.get(id_ref).into_iter().flatten() {
                let n = pending.get_mut(child).expect("child tracked");
                *n -= 1;
                if *n == 0 {
                    ready.push(Reverse(key(child)));
                }
            }
        }
        out
    }

    /// Commits reachable from `start` following parent edges, `start` included.
    pub fn ancestors(&self, start: &CommitId) -> BTreeSet<CommitId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![start.clone()];
        while let Some(id) = stack.pop() {
            if !seen.insert(id.clone()) {
                continue;
            }
            if let Some(c) = self.commits.get(&id) {
                stack.extend(c.parents.iter().cloned());
            }
        }
        seen
    }

    pub fn reachable_commits(&self) -> BTreeSet<CommitId> {
        let mut all = BTreeSet::new();
        for tip in self.refs.values() {
            if !all.contains(tip) {
                all.extend(self.ancestors(tip));
            }
        }
        all
    }

    /// Local and remote-tracking branch refs.
    pub fn branch_refs(&self) -> impl Iterator<Item = (&String, &CommitId)> {
        self.refs.iter().filter(|(name, _)| {
            name.starts_with("refs/heads/")
                || (name.starts_with("refs/remotes/") && !name.ends_with("/HEAD"))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: RepoModel = serde_json::from_str(text)
            .map_err(|e| ScrubError::InvalidModel(format!("bad JSON: {e}")))?;
        model.validate()?;
        Ok(model)
    }
}

/// The distinct blob ids reachable from any commit on any ref.
pub fn unique_blobs(repo: &RepoModel) -> BTreeSet<BlobId> {
    repo.reachable_commits()
        .iter()
        .flat_map(|id| repo.commits[id].tree.values().cloned())
        .collect()
}

/// Incremental construction of a [`RepoModel`], mainly for fixtures and the
/// archive ingest channel.
#[derive(Default)]
pub struct RepoBuilder {
    commits: BTreeMap<CommitId, Commit>,
    blobs: BTreeMap<BlobId, Blob>,
    refs: BTreeMap<String, CommitId>,
    head: Option<String>,
}

impl RepoBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn blob(&mut self, bytes: impl Into<Vec<u8>>) -> BlobId {
        let blob = Blob::new(bytes.into());
        let id = blob.id.clone();
        self.blobs.entry(id.clone()).or_insert(blob);
        id
    }

    /// Adds a commit whose tree is given as file contents.
    pub fn commit<P, B>(
        &mut self,
        parents: &[CommitId],
        author: (&str, &str),
        timestamp: Timestamp,
        message: &str,
        files: impl IntoIterator<Item = (P, B)>,
    ) -> CommitId
    where
        P: Into<String>,
        B: Into<Vec<u8>>,
    {
        let tree: Tree = files
            .into_iter()
            .map(|(p, b)| (p.into(), self.blob(b)))
            .collect();
        self.add_commit(Commit::new(
            parents.to_vec(),
            author.0,
            author.1,
            timestamp,
            message,
            tree,
        ))
    }

    pub fn add_commit(&mut self, commit: Commit) -> CommitId {
        let id = commit.id.clone();
        self.commits.insert(id.clone(), commit);
        id
    }

    pub fn add_blob(&mut self, blob: Blob) -> BlobId {
        let id = blob.id.clone();
        self.blobs.insert(id.clone(), blob);
        id
    }

    pub fn set_ref(&mut self, name: impl Into<String>, target: CommitId) -> &mut Self {
        self.refs.insert(name.into(), target);
        self
    }

    pub fn set_head(&mut self, name: impl Into<String>) -> &mut Self {
        self.head = Some(name.into());
        self
    }

    /// Head defaults to the first `refs/heads/*` ref by name, then the first ref.
    pub fn build(self) -> Result<RepoModel> {
        let head = match self.head {
            Some(h) => h,
            None => default_head(&self.refs).ok_or(ScrubError::EmptyRepository)?,
        };
        RepoModel::from_parts(self.commits, self.blobs, self.refs, head)
    }
}

pub(crate) fn default_head(refs: &BTreeMap<String, CommitId>) -> Option<String> {
    refs.keys()
        .find(|r| r.starts_with("refs/heads/"))
        .or_else(|| refs.keys().next())
        .cloned()
}

mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}
