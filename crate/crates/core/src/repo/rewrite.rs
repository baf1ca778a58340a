use std::collections::{BTreeMap, HashMap};

use super::{Blob, BlobId, Commit, CommitId, RepoModel, Tree};
use crate::error::{Result, ScrubError};

type TextFn<'a> = Box<dyn Fn(&str) -> Result<String, String> + Sync + 'a>;
type BlobFn<'a> = Box<dyn Fn(&Blob) -> Result<Vec<u8>, String> + Sync + 'a>;
type PathFn<'a> = Box<dyn Fn(&str) -> bool + Sync + 'a>;

/// Content transforms applied to every commit on every ref. Each callback
/// must be a pure function of its argument: results are memoized per
/// distinct input.
pub struct RewriteCallbacks<'a> {
    pub name: TextFn<'a>,
    pub email: TextFn<'a>,
    pub message: TextFn<'a>,
    pub blob: BlobFn<'a>,
    /// `false` drops the path from every tree.
    pub keep_path: PathFn<'a>,
}

impl Default for RewriteCallbacks<'_> {
    fn default() -> Self {
        RewriteCallbacks {
            name: Box::new(|s| Ok(s.to_owned())),
            email: Box::new(|s| Ok(s.to_owned())),
            message: Box::new(|s| Ok(s.to_owned())),
            blob: Box::new(|b| Ok(b.bytes.clone())),
            keep_path: Box::new(|_| true),
        }
    }
}

impl<'a> RewriteCallbacks<'a> {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn with_name(mut self, f: impl Fn(&str) -> Result<String, String> + Sync + 'a) -> Self {
        self.name = Box::new(f);
        self
    }

    pub fn with_email(mut self, f: impl Fn(&str) -> Result<String, String> + Sync + 'a) -> Self {
        self.email = Box::new(f);
        self
    }

    pub fn with_message(
        mut self,
        f: impl Fn(&str) -> Result<String, String> + Sync + 'a,
    ) -> Self {
        self.message = Box::new(f);
        self
    }

    pub fn with_blob(mut self, f: impl Fn(&Blob) -> Result<Vec<u8>, String> + Sync + 'a) -> Self {
        self.blob = Box::new(f);
        self
    }

    pub fn with_keep_path(mut self, f: impl Fn(&str) -> bool + Sync + 'a) -> Self {
        self.keep_path = Box::new(f);
        self
    }
}

struct Memo<'c, 'a> {
    f: &'c TextFn<'a>,
    cache: HashMap<String, String>,
}

impl Memo<'_, '_> {
    fn apply(&mut self, input: &str) -> Result<String> {
        if let Some(out) = self.cache.get(input) {
            return Ok(out.clone());
        }
        let out = (self.f)(input).map_err(ScrubError::CallbackFailure)?;
        self.cache.insert(input.to_owned(), out.clone());
        Ok(out)
    }
}

/// Rebuilds the whole DAG through `cbs`, parents before children. Commit
/// ids are recomputed, refs follow their rewritten tips and timestamps are
/// carried over untouched. Commits whose tree empties out are kept.
///
/// On any callback error the input is left as it was and
/// `CALLBACK_FAILURE` is returned.
pub fn rewrite_history(repo: &RepoModel, cbs: &RewriteCallbacks<'_>) -> Result<RepoModel> {
    let mut names = Memo { f: &cbs.name, cache: HashMap::new() };
    let mut emails = Memo { f: &cbs.email, cache: HashMap::new() };
    let mut messages = Memo { f: &cbs.message, cache: HashMap::new() };
    let mut blob_map: HashMap<&BlobId, BlobId> = HashMap::new();
    let mut keep: HashMap<&str, bool> = HashMap::new();
    let mut blobs: BTreeMap<BlobId, Blob> = BTreeMap::new();
    let mut commit_map: HashMap<&CommitId, CommitId> = HashMap::new();
    let mut commits: BTreeMap<CommitId, Commit> = BTreeMap::new();

    for old_id in repo.topo_order() {
        let old = &repo.commits[old_id];
        let mut tree = Tree::new();
        for (path, blob_id) in &old.tree {
            let kept = *keep
                .entry(path.as_str())
                .or_insert_with(|| (cbs.keep_path)(path));
            if !kept {
                continue;
            }
            let new_id = match blob_map.get(blob_id) {
                Some(id) => id.clone(),
                None => {
                    let bytes = (cbs.blob)(&repo.blobs[blob_id])
                        .map_err(ScrubError::CallbackFailure)?;
                    let blob = Blob::new(bytes);
                    let id = blob.id.clone();
                    blobs.entry(id.clone()).or_insert(blob);
                    blob_map.insert(blob_id, id.clone());
                    id
                }
            };
            tree.insert(path.clone(), new_id);
        }
        let parents = old
            .parents
            .iter()
            .map(|p| commit_map[p].clone())
            .collect();
        let commit = Commit::new(
            parents,
            names.apply(&old.author_name)?,
            emails.apply(&old.author_email)?,
            old.timestamp,
            messages.apply(&old.message)?,
            tree,
        );
        commit_map.insert(old_id, commit.id.clone());
        commits.insert(commit.id.clone(), commit);
    }

    let refs = repo
        .refs
        .iter()
        .map(|(name, tip)| (name.clone(), commit_map[tip].clone()))
        .collect();
    RepoModel::from_parts(commits, blobs, refs, repo.head.clone())
}
