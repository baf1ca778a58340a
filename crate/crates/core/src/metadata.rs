//! Per-repository metadata record, selection filter and consistency checks.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};

use chrono::{DateTime, FixedOffset};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::error::{Result, ScrubError};
use crate::ingest::MB;
use crate::lang::LangMap;
use crate::repo::{RepoModel, Timestamp};
use crate::zones::{extract_functions_with, extract_zones_with, ZoneKind};

pub const MIN_LOC: i64 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum License {
    Mit,
    #[serde(rename = "APACHE_2")]
    Apache2,
    Bsd,
    Gpl,
    Lgpl,
    Mpl,
    Proprietary,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub repo_id: Uuid,
    pub repo_name: String,
    pub languages: BTreeMap<String, f64>,
    pub extensions: BTreeMap<String, f64>,
    pub stack: String,
    pub license_type: License,
    pub created_at: String,
    pub commit_count: i64,
    pub branch_count: i64,
    pub contributors_count: i64,
    pub repo_git_history_mb: f64,
    pub repo_bundle_mb: f64,
    pub repo_worktree_mb: f64,
    pub files: i64,
    pub loc: i64,
    pub raw_loc: i64,
    pub avg_func_length: f64,
    pub docstring_ratio: f64,
    pub duplication_ratio: f64,
    pub documentation_cnt: i64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LineCounts {
    pub loc: i64,
    pub raw_loc: i64,
    pub by_language: BTreeMap<String, i64>,
    pub by_extension: BTreeMap<String, i64>,
    pub files: i64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct QualityMetrics {
    pub avg_func_length: f64,
    pub docstring_ratio: f64,
    pub duplication_ratio: f64,
    pub documentation_cnt: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryMetrics {
    pub created_at: Timestamp,
    pub commit_count: i64,
    pub branch_count: i64,
    pub contributors_count: i64,
}

/// On-disk sizes in bytes, measured by the caller.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sizes {
    pub git_history: u64,
    pub bundle: u64,
}

fn non_blank(text: &str) -> impl Iterator<Item = &str> {
    text.lines().filter(|l| !l.trim().is_empty())
}

/// Facts about one head file.
#[derive(Default)]
struct FileFacts {
    raw: i64,
    language: Option<String>,
    ext: String,
    comment_lines: i64,
    code_lines: i64,
    lines: Vec<String>,
    functions: Vec<usize>,
}

fn extension_key(path: &str) -> String {
    let file = path.rsplit('/').next().unwrap_or(path);
    match file.rsplit_once('.') {
        Some((stem, ext)) if !stem.is_empty() => ext.to_ascii_lowercase(),
        _ => file.to_owned(),
    }
}

/// Lines whose non-whitespace bytes all sit inside comment zones.
fn comment_line_count(map: &LangMap, text: &str, language: &str) -> i64 {
    let Ok(zones) = extract_zones_with(map, text, language) else { return 0 };
    let mut in_comment = vec![false; text.len()];
    for z in zones.iter().filter(|z| z.kind == ZoneKind::Comment) {
        in_comment[z.span.clone()].iter_mut().for_each(|b| *b = true);
    }
    let mut count = 0;
    let mut start = 0;
    for line in text.split_inclusive('\n') {
        let bytes = line.as_bytes();
        let mut any = false;
        let all = bytes.iter().enumerate().all(|(i, b)| {
            if b.is_ascii_whitespace() {
                return true;
            }
            any = true;
            in_comment[start + i]
        });
        if any && all {
            count += 1;
        }
        start += bytes.len();
    }
    count
}

fn file_facts(map: &LangMap, path: &str, text: &str) -> FileFacts {
    let mut f = FileFacts { raw: non_blank(text).count() as i64, ..FileFacts::default() };
    let Some(lang) = map.language_for(path).filter(|l| map.is_supported(&l.name)) else {
        return f;
    };
    f.comment_lines = comment_line_count(map, text, &lang.name);
    f.code_lines = f.raw - f.comment_lines;
    f.lines = non_blank(text).map(|l| l.trim().to_owned()).collect();
    f.functions = extract_functions_with(map, text, &lang.name).iter().map(|s| s.line_count).collect();
    f.language = Some(lang.name.clone());
    f.ext = extension_key(path);
    f
}

fn head_facts(repo: &RepoModel, map: &LangMap) -> Vec<(String, Option<FileFacts>)> {
    let tree: Vec<_> = repo.head_commit().tree.iter().collect();
    tree.par_iter()
        .map(|(path, id)| {
            let facts = repo.blobs[*id].text().map(|t| file_facts(map, path, t));
            ((*path).clone(), facts)
        })
        .collect()
}

pub fn count_lines(repo: &RepoModel, map: &LangMap) -> LineCounts {
    tally(&head_facts(repo, map))
}

fn tally(facts: &[(String, Option<FileFacts>)]) -> LineCounts {
    let mut c = LineCounts { files: facts.len() as i64, ..LineCounts::default() };
    for f in facts.iter().filter_map(|(_, f)| f.as_ref()) {
        c.raw_loc += f.raw;
        if let Some(lang) = &f.language {
            c.loc += f.raw;
            *c.by_language.entry(lang.clone()).or_default() += f.raw;
            *c.by_extension.entry(f.ext.clone()).or_default() += f.raw;
        }
    }
    c
}

fn is_root_readme(path: &str) -> bool {
    !path.contains('/') && path.to_ascii_lowercase().starts_with("readme")
}

pub fn quality_metrics(repo: &RepoModel, map: &LangMap) -> QualityMetrics {
    quality(repo, &head_facts(repo, map))
}

fn quality(repo: &RepoModel, facts: &[(String, Option<FileFacts>)]) -> QualityMetrics {
    let mut comments = 0i64;
    let mut code = 0i64;
    let mut total = 0usize;
    let mut distinct: HashSet<&str> = HashSet::new();
    let mut funcs = 0usize;
    let mut func_lines = 0usize;
    for f in facts.iter().filter_map(|(_, f)| f.as_ref()).filter(|f| f.language.is_some()) {
        comments += f.comment_lines;
        code += f.code_lines;
        total += f.lines.len();
        distinct.extend(f.lines.iter().map(String::as_str));
        funcs += f.functions.len();
        func_lines += f.functions.iter().sum::<usize>();
    }
    let tree = &repo.head_commit().tree;
    let documentation_cnt = tree
        .iter()
        .filter(|(p, _)| is_root_readme(p))
        .filter_map(|(_, id)| repo.blobs[id].text())
        .map(|t| t.lines().count() as i64)
        .sum();
    QualityMetrics {
        avg_func_length: if funcs == 0 { 0.0 } else { func_lines as f64 / funcs as f64 },
        docstring_ratio: if code == 0 { 0.0 } else { comments as f64 / code as f64 },
        duplication_ratio: if total == 0 { 0.0 } else { 1.0 - distinct.len() as f64 / total as f64 },
        documentation_cnt,
    }
}

/// `commit_count` follows the branch whose tip is newest; ties go to the
/// smallest ref name.
pub fn history_metrics(repo: &RepoModel) -> Result<HistoryMetrics> {
    let created = repo
        .commits
        .values()
        .map(|c| c.timestamp)
        .min_by_key(|t| t.seconds)
        .ok_or(ScrubError::EmptyRepository)?;
    let branches: Vec<_> = repo.branch_refs().collect();
    let candidates: Vec<_> = if branches.is_empty() { repo.refs.iter().collect() } else { branches.clone() };
    let (_, tip) = candidates
        .iter()
        .max_by(|(an, a), (bn, b)| {
            let (ta, tb) = (repo.commits[*a].timestamp.seconds, repo.commits[*b].timestamp.seconds);
            ta.cmp(&tb).then_with(|| bn.cmp(an))
        })
        .ok_or(ScrubError::EmptyRepository)?;
    let contributors: BTreeSet<(&str, &str)> = repo
        .commits
        .values()
        .map(|c| (c.author_name.as_str(), c.author_email.as_str()))
        .collect();
    Ok(HistoryMetrics {
        created_at: created,
        commit_count: repo.ancestors(tip).len() as i64,
        branch_count: branches.len() as i64,
        contributors_count: contributors.len() as i64,
    })
}

const LICENSE_SIGNATURES: &[(&str, License)] = &[
    ("gnu lesser general public license", License::Lgpl),
    ("gnu library general public license", License::Lgpl),
    ("gnu affero general public license", License::Gpl),
    ("gnu general public license", License::Gpl),
    ("apache license, version 2.0", License::Apache2),
    ("apache license\n", License::Apache2),
    ("mozilla public license", License::Mpl),
    ("mit license", License::Mit),
    ("permission is hereby granted, free of charge", License::Mit),
    ("redistribution and use in source and binary forms", License::Bsd),
    ("proprietary", License::Proprietary),
    ("all rights reserved", License::Proprietary),
];

fn is_license_name(name: &str) -> bool {
    let n = name.to_ascii_uppercase();
    !name.contains('/') && ["LICENSE", "LICENCE", "COPYING"].iter().any(|p| n.starts_with(p))
}

/// Root-level `LICENSE*`/`LICENCE*`/`COPYING*` files in name order; the
/// first recognised signature wins.
pub fn detect_license<'a>(root_files: impl IntoIterator<Item = (&'a str, &'a str)>) -> License {
    let mut files: Vec<_> = root_files.into_iter().filter(|(n, _)| is_license_name(n)).collect();
    files.sort();
    for (_, text) in files {
        let text = text.to_lowercase();
        let text = text.replace("\r\n", "\n");
        if let Some((_, l)) = LICENSE_SIGNATURES.iter().find(|(sig, _)| text.contains(sig)) {
            return *l;
        }
        // Apache's header splits "Version 2.0" onto the next line.
        if text.contains("apache license") && text.contains("version 2.0") {
            return License::Apache2;
        }
    }
    License::Unknown
}

fn shares(counts: &BTreeMap<String, i64>, total: i64) -> BTreeMap<String, f64> {
    if total <= 0 {
        return BTreeMap::new();
    }
    counts
        .iter()
        .filter(|(_, &n)| n > 0)
        .map(|(k, &n)| (k.clone(), n as f64 / total as f64))
        .collect()
}

/// `"Python 62.1%, Go 20.3%, Shell 9.9%"`; ties broken by name.
pub fn stack_string(languages: &BTreeMap<String, f64>) -> String {
    let mut v: Vec<_> = languages.iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(a.1).then_with(|| a.0.cmp(b.0)));
    v.iter()
        .take(3)
        .map(|(l, s)| format!("{l} {:.1}%", *s * 100.0))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn mb(bytes: u64) -> f64 {
    (bytes as f64 / MB * 100.0).round() / 100.0
}

pub fn format_timestamp(t: Timestamp) -> String {
    let offset = FixedOffset::east_opt(t.offset_minutes * 60).unwrap_or(FixedOffset::east_opt(0).unwrap());
    DateTime::from_timestamp(t.seconds, 0)
        .map(|d| d.with_timezone(&offset).to_rfc3339())
        .unwrap_or_default()
}

pub fn extract(repo: &RepoModel, repo_name: &str, sizes: Sizes, map: &LangMap) -> Result<MetadataRecord> {
    let history = history_metrics(repo)?;
    let facts = head_facts(repo, map);
    let lines = tally(&facts);
    let q = quality(repo, &facts);
    let tree = &repo.head_commit().tree;
    let root: Vec<(&str, &str)> = tree
        .iter()
        .filter(|(p, _)| !p.contains('/'))
        .filter_map(|(p, id)| repo.blobs[id].text().map(|t| (p.as_str(), t)))
        .collect();
    let worktree: u64 = tree.values().map(|id| repo.blobs[id].bytes.len() as u64).sum();
    let languages = shares(&lines.by_language, lines.loc);
    Ok(MetadataRecord {
        repo_id: Uuid::new_v4(),
        repo_name: repo_name.to_owned(),
        stack: stack_string(&languages),
        extensions: shares(&lines.by_extension, lines.loc),
        languages,
        license_type: detect_license(root),
        created_at: format_timestamp(history.created_at),
        commit_count: history.commit_count,
        branch_count: history.branch_count,
        contributors_count: history.contributors_count,
        repo_git_history_mb: mb(sizes.git_history),
        repo_bundle_mb: mb(sizes.bundle),
        repo_worktree_mb: mb(worktree),
        files: lines.files,
        loc: lines.loc,
        raw_loc: lines.raw_loc,
        avg_func_length: q.avg_func_length,
        docstring_ratio: q.docstring_ratio,
        duplication_ratio: q.duplication_ratio,
        documentation_cnt: q.documentation_cnt,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    Ok,
    LocBelowThreshold,
    Unparseable,
    OnlyGenerated,
    ForkDuplicate,
    NotSoftware,
    PartialCodebase,
    Coursework,
    AiGenerated,
    BelowQualityBar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionDecision {
    pub accepted: bool,
    pub reason: Reason,
}

/// `None` stands for a repository whose extraction failed.
pub fn select(record: Option<&MetadataRecord>) -> SelectionDecision {
    match record {
        None => SelectionDecision { accepted: false, reason: Reason::Unparseable },
        Some(r) if r.loc >= MIN_LOC => SelectionDecision { accepted: true, reason: Reason::Ok },
        Some(_) => SelectionDecision { accepted: false, reason: Reason::LocBelowThreshold },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Anomaly {
    CommitsZeroWithCode,
    LocExceedsRaw,
    SharesNotNormalized,
    NegativeField,
    DupRatioRange,
}

pub fn consistency_check(r: &MetadataRecord) -> Vec<Anomaly> {
    let mut out = Vec::new();
    if r.commit_count == 0 && r.loc > 0 {
        out.push(Anomaly::CommitsZeroWithCode);
    }
    if r.loc > r.raw_loc {
        out.push(Anomaly::LocExceedsRaw);
    }
    let normalized = |m: &BTreeMap<String, f64>| (0.999..=1.001).contains(&m.values().sum::<f64>());
    if r.loc > 0 && !(normalized(&r.languages) && normalized(&r.extensions)) {
        out.push(Anomaly::SharesNotNormalized);
    }
    let ints = [r.commit_count, r.branch_count, r.contributors_count, r.files, r.loc, r.raw_loc, r.documentation_cnt];
    let floats = [
        r.repo_git_history_mb,
        r.repo_bundle_mb,
        r.repo_worktree_mb,
        r.avg_func_length,
        r.docstring_ratio,
        r.duplication_ratio,
    ];
    let shares = r.languages.values().chain(r.extensions.values());
    if ints.iter().any(|&v| v < 0) || floats.iter().chain(shares).any(|&v| v < 0.0) {
        out.push(Anomaly::NegativeField);
    }
    if !(0.0..=1.0).contains(&r.duplication_ratio) {
        out.push(Anomaly::DupRatioRange);
    }
    out
}

/// CSV form: maps travel as JSON objects inside their cells.
#[derive(Serialize, Deserialize)]
struct CsvRow {
    repo_id: Uuid,
    repo_name: String,
    languages: String,
    extensions: String,
    stack: String,
    license_type: License,
    created_at: String,
    commit_count: i64,
    branch_count: i64,
    contributors_count: i64,
    repo_git_history_mb: f64,
    repo_bundle_mb: f64,
    repo_worktree_mb: f64,
    files: i64,
    loc: i64,
    raw_loc: i64,
    avg_func_length: f64,
    docstring_ratio: f64,
    duplication_ratio: f64,
    documentation_cnt: i64,
}

pub const CSV_HEADER: &[&str] = &[
    "repo_id",
    "repo_name",
    "languages",
    "extensions",
    "stack",
    "license_type",
    "created_at",
    "commit_count",
    "branch_count",
    "contributors_count",
    "repo_git_history_mb",
    "repo_bundle_mb",
    "repo_worktree_mb",
    "files",
    "loc",
    "raw_loc",
    "avg_func_length",
    "docstring_ratio",
    "duplication_ratio",
    "documentation_cnt",
];

impl From<&MetadataRecord> for CsvRow {
    fn from(r: &MetadataRecord) -> Self {
        let json = |m: &BTreeMap<String, f64>| serde_json::to_string(m).expect("map serializes");
        CsvRow {
            repo_id: r.repo_id,
            repo_name: r.repo_name.clone(),
            languages: json(&r.languages),
            extensions: json(&r.extensions),
            stack: r.stack.clone(),
            license_type: r.license_type,
            created_at: r.created_at.clone(),
            commit_count: r.commit_count,
            branch_count: r.branch_count,
            contributors_count: r.contributors_count,
            repo_git_history_mb: r.repo_git_history_mb,
            repo_bundle_mb: r.repo_bundle_mb,
            repo_worktree_mb: r.repo_worktree_mb,
            files: r.files,
            loc: r.loc,
            raw_loc: r.raw_loc,
            avg_func_length: r.avg_func_length,
            docstring_ratio: r.docstring_ratio,
            duplication_ratio: r.duplication_ratio,
            documentation_cnt: r.documentation_cnt,
        }
    }
}

impl TryFrom<CsvRow> for MetadataRecord {
    type Error = String;

    fn try_from(r: CsvRow) -> Result<Self, String> {
        let map = |s: &str| serde_json::from_str::<BTreeMap<String, f64>>(s).map_err(|e| e.to_string());
        Ok(MetadataRecord {
            repo_id: r.repo_id,
            repo_name: r.repo_name,
            languages: map(&r.languages)?,
            extensions: map(&r.extensions)?,
            stack: r.stack,
            license_type: r.license_type,
            created_at: r.created_at,
            commit_count: r.commit_count,
            branch_count: r.branch_count,
            contributors_count: r.contributors_count,
            repo_git_history_mb: r.repo_git_history_mb,
            repo_bundle_mb: r.repo_bundle_mb,
            repo_worktree_mb: r.repo_worktree_mb,
            files: r.files,
            loc: r.loc,
            raw_loc: r.raw_loc,
            avg_func_length: r.avg_func_length,
            docstring_ratio: r.docstring_ratio,
            duplication_ratio: r.duplication_ratio,
            documentation_cnt: r.documentation_cnt,
        })
    }
}

pub fn write_csv<W: Write>(records: &[MetadataRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(CSV_HEADER).map_err(|e| ScrubError::Config(e.to_string()))?;
    }
    for r in records {
        w.serialize(CsvRow::from(r)).map_err(|e| ScrubError::Config(e.to_string()))?;
    }
    w.flush().map_err(|e| ScrubError::io("cannot write CSV", e))
}

/// Rows that fail to parse come back as `Err` with the reason.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<Result<MetadataRecord, String>>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(|e| ScrubError::Config(format!("metadata CSV: {e}")))?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(ScrubError::Config("metadata CSV header does not match".into()));
    }
    Ok(rdr
        .deserialize::<CsvRow>()
        .map(|row| row.map_err(|e| e.to_string()).and_then(MetadataRecord::try_from))
        .collect())
}
