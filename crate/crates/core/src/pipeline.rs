//! Working-tree sanitization, history rewrite and the release gate.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;
use std::time::Instant;

use globset::{Glob, GlobSet, GlobSetBuilder};
use rayon::prelude::*;
use serde::Serialize;

use crate::detect::{
    canonical_order, CommitField, Detector, DetectorSet, Finding, Scanner, Severity, Surface,
    Target,
};
use crate::error::{Result, ScrubError};
use crate::lang::LangMap;
use crate::mask::{mask_for, resolve_overlaps, apply_replacements, Manifest, MaskClass, Salt};
use crate::repo::{rewrite_history, BlobId, RepoModel, RewriteCallbacks};
use crate::detect::is_mask_artifact;
use crate::zones::{classify_file_with, extract_zones_with, FileClass};

pub const DEFAULT_DENY_GLOBS: &[&str] = &["*.pem", "*.p12", "*.key", "id_rsa*", ".env", "*.keystore"];

/// Scan/replace rounds before leftovers count as a residual.
pub const MAX_PASSES: usize = 3;

#[derive(Clone, Debug)]
pub struct DenyGlobs {
    patterns: Vec<String>,
    set: GlobSet,
}

impl DenyGlobs {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self> {
        let mut b = GlobSetBuilder::new();
        for p in patterns {
            let glob = Glob::new(p.as_ref())
                .map_err(|e| ScrubError::Config(format!("deny_glob {:?}: {e}", p.as_ref())))?;
            b.add(glob);
        }
        Ok(DenyGlobs {
            patterns: patterns.iter().map(|p| p.as_ref().to_owned()).collect(),
            set: b.build().map_err(|e| ScrubError::Config(e.to_string()))?,
        })
    }

    /// Tested against the full path and against the file name.
    pub fn matches(&self, path: &str) -> bool {
        let name = path.rsplit('/').next().unwrap_or(path);
        self.set.is_match(path) || self.set.is_match(name)
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }
}

impl Default for DenyGlobs {
    fn default() -> Self {
        DenyGlobs::new(DEFAULT_DENY_GLOBS).expect("default globs compile")
    }
}

pub struct PipelineConfig {
    pub scanner: Scanner,
    pub lang: LangMap,
    pub salt: Salt,
    pub detectors: DetectorSet,
    pub deny: DenyGlobs,
    pub require_ner: bool,
}

impl PipelineConfig {
    /// Bundled rules, no dictionaries, NER off.
    pub fn new(salt: Salt) -> Self {
        let mut detectors = DetectorSet::all();
        detectors.remove(Detector::Ner);
        PipelineConfig {
            scanner: Scanner::default(),
            lang: LangMap::builtin().clone(),
            salt,
            detectors,
            deny: DenyGlobs::default(),
            require_ner: false,
        }
    }

    fn history_set(&self) -> DetectorSet {
        self.detectors.intersect(DetectorSet::history())
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StageLog {
    pub stage: String,
    pub millis: u128,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RunLog {
    pub stages: Vec<StageLog>,
    pub detector_hits: BTreeMap<Detector, usize>,
    pub skipped_detectors: Vec<Detector>,
    /// Code files with no lexer, left unscanned.
    pub unsupported_files: Vec<String>,
    pub outputs: Vec<String>,
}

impl RunLog {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push(StageLog { stage: stage.into(), millis: start.elapsed().as_millis() });
        out
    }

    fn count(&mut self, findings: &[Finding]) {
        for f in findings {
            *self.detector_hits.entry(f.detector).or_default() += 1;
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GateReport {
    pub residual: Vec<Finding>,
    pub fatal: usize,
    pub forbidden_paths: Vec<String>,
    pub skipped_detectors: Vec<Detector>,
    pub passed: bool,
    pub exit_code: i32,
}

/// How a head file is scanned.
enum Scope {
    Zones(String),
    Full,
    Skip,
}

fn scope_for(cfg: &PipelineConfig, path: &str, bytes: &[u8]) -> (FileClass, Scope) {
    let class = classify_file_with(&cfg.lang, path, bytes);
    let scope = match class {
        FileClass::Binary => Scope::Skip,
        FileClass::Config | FileClass::Doc => Scope::Full,
        FileClass::Code => match cfg.lang.language_for(path) {
            Some(l) if cfg.lang.lexer_for(&l.name).is_some() => Scope::Zones(l.name.clone()),
            _ => Scope::Skip,
        },
    };
    (class, scope)
}

fn ranges_for(cfg: &PipelineConfig, scope: &Scope, text: &str) -> Vec<Range<usize>> {
    match scope {
        Scope::Full => vec![0..text.len()],
        Scope::Skip => Vec::new(),
        Scope::Zones(lang) => extract_zones_with(&cfg.lang, text, lang)
            .map(|zs| zs.into_iter().map(|z| z.content).collect())
            .unwrap_or_default(),
    }
}

struct Scrubbed {
    text: String,
    manifest: Manifest,
    first: Vec<Finding>,
}

/// Scan → resolve → replace until clean, at most `MAX_PASSES` rounds.
fn scrub_text(
    cfg: &PipelineConfig,
    text: &str,
    ranges: &dyn Fn(&str) -> Vec<Range<usize>>,
    target: &Target,
    surface: Surface,
    set: DetectorSet,
) -> Result<Scrubbed> {
    let mut cur = text.to_owned();
    let mut manifest = Manifest::new();
    let mut first = None;
    for _ in 0..MAX_PASSES {
        let found = cfg.scanner.scan_ranges(&cur, &ranges(&cur), target, surface, set);
        if first.is_none() {
            first = Some(found.clone());
        }
        if found.is_empty() {
            return Ok(Scrubbed { text: cur, manifest, first: first.unwrap_or_default() });
        }
        let (next, m) = apply_replacements(&cur, &resolve_overlaps(found), &cfg.salt)?;
        manifest.merge(&m);
        cur = next;
    }
    let left = cfg.scanner.scan_ranges(&cur, &ranges(&cur), target, surface, set);
    if !left.is_empty() {
        for f in &left {
            log::error!("residual after {MAX_PASSES} passes: {:?} {:?}", f.category, f.locator);
        }
        return Err(ScrubError::PostScanResidual { count: left.len() });
    }
    Ok(Scrubbed { text: cur, manifest, first: first.unwrap_or_default() })
}

/// Head files in path order, skipping denied paths. A blob reachable from
/// several paths is listed once, preferring a fully scanned class.
fn head_files<'r>(repo: &'r RepoModel, cfg: &PipelineConfig) -> Vec<(&'r str, &'r BlobId)> {
    let mut chosen: BTreeMap<&BlobId, &str> = BTreeMap::new();
    for (path, id) in &repo.head_commit().tree {
        if cfg.deny.matches(path) {
            continue;
        }
        match chosen.get(id) {
            None => {
                chosen.insert(id, path);
            }
            Some(prev) => {
                let bytes = &repo.blobs[id].bytes;
                let full = |p: &str| matches!(scope_for(cfg, p, bytes).1, Scope::Full);
                if !full(prev) && full(path) {
                    chosen.insert(id, path);
                }
            }
        }
    }
    let mut files: Vec<_> = chosen.into_iter().map(|(id, p)| (p, id)).collect();
    files.sort();
    files
}

pub fn scan_working_tree(repo: &RepoModel, cfg: &PipelineConfig) -> Vec<Finding> {
    let findings: Vec<Finding> = head_files(repo, cfg)
        .par_iter()
        .flat_map_iter(|(path, id)| {
            let bytes = &repo.blobs[*id].bytes;
            let (_, scope) = scope_for(cfg, path, bytes);
            let text = std::str::from_utf8(bytes).unwrap_or("");
            let ranges = ranges_for(cfg, &scope, text);
            cfg.scanner.scan_ranges(
                text,
                &ranges,
                &Target::Path((*path).to_owned()),
                Surface::WorkingTree,
                cfg.detectors,
            )
        })
        .collect();
    canonical_order(findings)
}

struct HeadPass {
    blobs: HashMap<BlobId, Vec<u8>>,
    manifest: Manifest,
    findings: Vec<Finding>,
    unsupported: Vec<String>,
}

fn sanitize_head(repo: &RepoModel, cfg: &PipelineConfig) -> Result<HeadPass> {
    let files = head_files(repo, cfg);
    let results: Vec<Result<(BlobId, Option<Scrubbed>, bool)>> = files
        .par_iter()
        .map(|(path, id)| {
            let bytes = &repo.blobs[*id].bytes;
            let (class, scope) = scope_for(cfg, path, bytes);
            let unsupported = class == FileClass::Code && matches!(scope, Scope::Skip);
            if matches!(scope, Scope::Skip) {
                return Ok(((*id).clone(), None, unsupported));
            }
            let text = std::str::from_utf8(bytes).expect("text class");
            let s = scrub_text(
                cfg,
                text,
                &|t| ranges_for(cfg, &scope, t),
                &Target::Path((*path).to_owned()),
                Surface::WorkingTree,
                cfg.detectors,
            )?;
            Ok(((*id).clone(), Some(s), false))
        })
        .collect();
    let mut pass = HeadPass {
        blobs: HashMap::new(),
        manifest: Manifest::new(),
        findings: Vec::new(),
        unsupported: Vec::new(),
    };
    for ((path, _), r) in files.iter().zip(results) {
        let (id, scrubbed, unsupported) = r?;
        if unsupported {
            pass.unsupported.push((*path).to_owned());
        }
        if let Some(s) = scrubbed {
            pass.manifest.merge(&s.manifest);
            pass.findings.extend(s.first);
            pass.blobs.insert(id, s.text.into_bytes());
        }
    }
    pass.findings = canonical_order(pass.findings);
    Ok(pass)
}

struct HistoryPass {
    names: HashMap<String, String>,
    emails: HashMap<String, String>,
    messages: HashMap<String, String>,
    blobs: HashMap<BlobId, Vec<u8>>,
    manifest: Manifest,
    findings: Vec<Finding>,
}

/// Author fields, messages and every kept text blob not in `skip`.
fn sanitize_history_parts(
    repo: &RepoModel,
    cfg: &PipelineConfig,
    skip: &HashMap<BlobId, Vec<u8>>,
) -> Result<HistoryPass> {
    let mut manifest = Manifest::new();
    let mut name_counts: BTreeMap<&str, u64> = BTreeMap::new();
    let mut email_counts: BTreeMap<&str, u64> = BTreeMap::new();
    let mut messages: BTreeMap<&str, &crate::repo::CommitId> = BTreeMap::new();
    let mut blob_ids: BTreeSet<&BlobId> = BTreeSet::new();
    for (cid, c) in &repo.commits {
        *name_counts.entry(&c.author_name).or_default() += 1;
        *email_counts.entry(&c.author_email).or_default() += 1;
        messages.entry(&c.message).or_insert(cid);
        for (path, id) in &c.tree {
            if !cfg.deny.matches(path) && !skip.contains_key(id) {
                blob_ids.insert(id);
            }
        }
    }

    let mut author_map = |counts: BTreeMap<&str, u64>, class: MaskClass| -> Result<HashMap<String, String>> {
        let mut map = HashMap::new();
        for (value, n) in counts {
            if value.is_empty() || is_mask_artifact(value) {
                continue;
            }
            let masked = mask_for(class, value, &cfg.salt, None)?;
            manifest.record(class, value, &masked, Surface::CommitMeta, n);
            map.insert(value.to_owned(), masked);
        }
        Ok(map)
    };
    let names = author_map(name_counts, MaskClass::AuthorName)?;
    let emails = author_map(email_counts, MaskClass::AuthorEmail)?;

    let full = |t: &str| vec![0..t.len()];
    let msg_results: Vec<Result<(String, Scrubbed)>> = messages
        .into_par_iter()
        .map(|(msg, cid)| {
            let target = Target::Commit { id: cid.clone(), field: CommitField::Message };
            let s = scrub_text(cfg, msg, &full, &target, Surface::CommitMeta, cfg.detectors)?;
            Ok((msg.to_owned(), s))
        })
        .collect();
    let history_set = cfg.history_set();
    let blob_results: Vec<Result<Option<(BlobId, Scrubbed)>>> = blob_ids
        .into_par_iter()
        .map(|id| {
            let blob = &repo.blobs[id];
            let Some(text) = blob.text() else { return Ok(None) };
            let target = Target::Blob(id.clone());
            let s = scrub_text(cfg, text, &full, &target, Surface::HistoryBlob, history_set)?;
            Ok(Some((id.clone(), s)))
        })
        .collect();

    let mut findings = Vec::new();
    let mut message_map = HashMap::new();
    for r in msg_results {
        let (msg, s) = r?;
        manifest.merge(&s.manifest);
        findings.extend(s.first);
        if s.text != msg {
            message_map.insert(msg, s.text);
        }
    }
    let mut blob_map = HashMap::new();
    for r in blob_results {
        if let Some((id, s)) = r? {
            manifest.merge(&s.manifest);
            findings.extend(s.first);
            blob_map.insert(id, s.text.into_bytes());
        }
    }
    Ok(HistoryPass {
        names,
        emails,
        messages: message_map,
        blobs: blob_map,
        manifest,
        findings: canonical_order(findings),
    })
}

fn apply_rewrite(
    repo: &RepoModel,
    cfg: &PipelineConfig,
    hist: &HistoryPass,
    head: &HashMap<BlobId, Vec<u8>>,
) -> Result<RepoModel> {
    let lookup = |map: &HashMap<String, String>, s: &str| map.get(s).cloned().unwrap_or_else(|| s.to_owned());
    let cbs = RewriteCallbacks::identity()
        .with_name(|n| Ok(lookup(&hist.names, n)))
        .with_email(|e| Ok(lookup(&hist.emails, e)))
        .with_message(|m| Ok(lookup(&hist.messages, m)))
        .with_blob(|b| {
            Ok(head
                .get(&b.id)
                .or_else(|| hist.blobs.get(&b.id))
                .cloned()
                .unwrap_or_else(|| b.bytes.clone()))
        })
        .with_keep_path(|p| !cfg.deny.matches(p));
    rewrite_history(repo, &cbs)
}

/// Head files only; every commit holding those blobs picks up the change.
pub fn sanitize_working_tree(repo: &RepoModel, cfg: &PipelineConfig) -> Result<(RepoModel, Manifest)> {
    let head = sanitize_head(repo, cfg)?;
    let cbs = RewriteCallbacks::identity().with_blob(|b| {
        Ok(head.blobs.get(&b.id).cloned().unwrap_or_else(|| b.bytes.clone()))
    });
    Ok((rewrite_history(repo, &cbs)?, head.manifest))
}

/// Authors, messages, every text blob with the restricted detector set, and
/// denied paths dropped, in one rewrite.
pub fn sanitize_history(repo: &RepoModel, cfg: &PipelineConfig) -> Result<(RepoModel, Manifest)> {
    let hist = sanitize_history_parts(repo, cfg, &HashMap::new())?;
    let out = apply_rewrite(repo, cfg, &hist, &HashMap::new())?;
    Ok((out, hist.manifest))
}

pub fn gate_check(repo: &RepoModel, cfg: &PipelineConfig) -> GateReport {
    let mut residual = Vec::new();

    // Working tree: detectors inside zones for code, whole file otherwise;
    // the secret rules additionally see every code file in full.
    let head_tree = &repo.head_commit().tree;
    let wt: Vec<Finding> = head_tree
        .par_iter()
        .flat_map_iter(|(path, id)| {
            let bytes = &repo.blobs[id].bytes;
            let (class, scope) = scope_for(cfg, path, bytes);
            let Ok(text) = std::str::from_utf8(bytes) else { return Vec::new() };
            let target = Target::Path(path.clone());
            let mut found = Vec::new();
            if class == FileClass::Code {
                let mut zoned = cfg.detectors;
                zoned.remove(Detector::Secrets);
                found.extend(cfg.scanner.scan_ranges(text, &ranges_for(cfg, &scope, text), &target, Surface::WorkingTree, zoned));
                if cfg.detectors.contains(Detector::Secrets) {
                    let secrets = [Detector::Secrets].into_iter().collect();
                    found.extend(cfg.scanner.scan(text, &target, Surface::WorkingTree, secrets));
                }
            } else if class != FileClass::Binary {
                found.extend(cfg.scanner.scan(text, &target, Surface::WorkingTree, cfg.detectors));
            }
            found
        })
        .collect();
    residual.extend(wt);

    let mut meta: BTreeMap<(CommitField, &str), &crate::repo::CommitId> = BTreeMap::new();
    let mut history: BTreeSet<&BlobId> = BTreeSet::new();
    let head_blobs: BTreeSet<&BlobId> = head_tree.values().collect();
    let mut forbidden = BTreeSet::new();
    for (cid, c) in &repo.commits {
        meta.entry((CommitField::Message, &c.message)).or_insert(cid);
        meta.entry((CommitField::AuthorName, &c.author_name)).or_insert(cid);
        meta.entry((CommitField::AuthorEmail, &c.author_email)).or_insert(cid);
        for (path, id) in &c.tree {
            if cfg.deny.matches(path) {
                forbidden.insert(path.clone());
            }
            if !head_blobs.contains(id) {
                history.insert(id);
            }
        }
    }
    let meta_found: Vec<Finding> = meta
        .into_par_iter()
        .flat_map_iter(|((field, text), cid)| {
            let target = Target::Commit { id: cid.clone(), field };
            cfg.scanner.scan(text, &target, Surface::CommitMeta, cfg.detectors)
        })
        .collect();
    residual.extend(meta_found);
    let history_set = cfg.history_set();
    let blob_found: Vec<Finding> = history
        .into_par_iter()
        .flat_map_iter(|id| match repo.blobs[id].text() {
            Some(text) => cfg.scanner.scan(text, &Target::Blob(id.clone()), Surface::HistoryBlob, history_set),
            None => Vec::new(),
        })
        .collect();
    residual.extend(blob_found);

    let mut residual = canonical_order(residual);
    residual.dedup();
    let fatal = residual
        .iter()
        .filter(|f| matches!(f.severity, Severity::Critical | Severity::High))
        .count();
    let ner_enabled = cfg.detectors.contains(Detector::Ner);
    let skipped_detectors = if ner_enabled && cfg.scanner.ner_skipped() {
        vec![Detector::Ner]
    } else {
        Vec::new()
    };
    let ner_missing = cfg.require_ner && (!ner_enabled || !skipped_detectors.is_empty());
    let clean = fatal == 0 && forbidden.is_empty();
    let exit_code = if !clean {
        1
    } else if ner_missing {
        3
    } else {
        0
    };
    GateReport {
        residual,
        fatal,
        forbidden_paths: forbidden.into_iter().collect(),
        skipped_detectors,
        passed: exit_code == 0,
        exit_code,
    }
}

pub struct PipelineOutcome {
    pub repo: RepoModel,
    pub manifest: Manifest,
    pub gate: GateReport,
    pub log: RunLog,
}

/// Head sanitization and the history rewrite land in a single rewritten
/// history, then the gate re-scans the result.
pub fn run_pipeline(repo: &RepoModel, cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let mut log = RunLog::default();
    let head = log.time("working_tree", || sanitize_head(repo, cfg))?;
    log.count(&head.findings);
    log.unsupported_files = head.unsupported.clone();
    let hist = log.time("history_scan", || sanitize_history_parts(repo, cfg, &head.blobs))?;
    log.count(&hist.findings);
    let out = log.time("history_rewrite", || apply_rewrite(repo, cfg, &hist, &head.blobs))?;
    let mut manifest = head.manifest;
    manifest.merge(&hist.manifest);
    let gate = log.time("gate", || gate_check(&out, cfg));
    log.skipped_detectors = gate.skipped_detectors.clone();
    Ok(PipelineOutcome { repo: out, manifest, gate, log })
}
