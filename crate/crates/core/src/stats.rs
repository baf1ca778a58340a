//! Corpus-level aggregation: percentile summaries, language shares, the
//! status funnel and the audit sampler.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, ScrubError};
use crate::metadata::MetadataRecord;

pub const PERCENTILES: [f64; 6] = [0.10, 0.25, 0.50, 0.75, 0.90, 0.95];

/// Written as the first line of summary.csv.
pub const METHOD_NOTE: &str =
    "# percentiles: linear interpolation between closest ranks; std: population";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub metric: String,
    pub sum: f64,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub p95: f64,
    pub max: f64,
}

/// `q` in [0, 1] over already sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(metric: &str, values: &[f64]) -> Result<SummaryRow> {
    if values.is_empty() {
        return Err(ScrubError::EmptyInput);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let sum: f64 = v.iter().sum();
    let mean = sum / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let p = PERCENTILES.map(|q| percentile(&v, q));
    Ok(SummaryRow {
        metric: metric.to_owned(),
        sum,
        mean,
        std: var.sqrt(),
        min: v[0],
        p10: p[0],
        p25: p[1],
        p50: p[2],
        p75: p[3],
        p90: p[4],
        p95: p[5],
        max: v[v.len() - 1],
    })
}

/// Numeric record fields by their column name.
pub fn metric_value(r: &MetadataRecord, metric: &str) -> Option<f64> {
    Some(match metric {
        "loc" => r.loc as f64,
        "raw_loc" => r.raw_loc as f64,
        "commit_count" => r.commit_count as f64,
        "branch_count" => r.branch_count as f64,
        "contributors_count" => r.contributors_count as f64,
        "files" => r.files as f64,
        "repo_git_history_mb" => r.repo_git_history_mb,
        "repo_bundle_mb" => r.repo_bundle_mb,
        "repo_worktree_mb" => r.repo_worktree_mb,
        "avg_func_length" => r.avg_func_length,
        "docstring_ratio" => r.docstring_ratio,
        "duplication_ratio" => r.duplication_ratio,
        "documentation_cnt" => r.documentation_cnt as f64,
        _ => return None,
    })
}

/// The rows of the size and quality summary table.
pub const SUMMARY_METRICS: &[&str] = &[
    "loc",
    "commit_count",
    "files",
    "contributors_count",
    "repo_worktree_mb",
    "duplication_ratio",
    "docstring_ratio",
    "avg_func_length",
];

pub fn summarize_records(records: &[MetadataRecord], metric: &str) -> Result<SummaryRow> {
    let values: Option<Vec<f64>> = records.iter().map(|r| metric_value(r, metric)).collect();
    let values = values.ok_or_else(|| ScrubError::Config(format!("unknown metric {metric}")))?;
    summarize(metric, &values)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LanguageRow {
    pub language: String,
    pub loc_share_pct: f64,
    pub total_loc: i64,
    pub repo_count: usize,
}

pub fn language_table(records: &[MetadataRecord]) -> Vec<LanguageRow> {
    let mut loc: BTreeMap<&str, f64> = BTreeMap::new();
    let mut repos: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        for (lang, &share) in &r.languages {
            if share > 0.0 {
                *loc.entry(lang).or_default() += share * r.loc as f64;
                *repos.entry(lang).or_default() += 1;
            }
        }
    }
    let total: f64 = loc.values().sum();
    let mut rows: Vec<LanguageRow> = loc
        .into_iter()
        .map(|(lang, l)| LanguageRow {
            language: lang.to_owned(),
            loc_share_pct: if total > 0.0 { l / total * 100.0 } else { 0.0 },
            total_loc: l.round() as i64,
            repo_count: repos[lang],
        })
        .collect();
    rows.sort_by(|a, b| b.loc_share_pct.total_cmp(&a.loc_share_pct).then_with(|| a.language.cmp(&b.language)));
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FunnelRow {
    pub status: String,
    pub count: usize,
    pub pct: f64,
}

pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Count per status, largest first, percentages of the total to one decimal.
pub fn funnel<S: AsRef<str>>(statuses: &[S]) -> Vec<FunnelRow> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in statuses {
        *counts.entry(s.as_ref()).or_default() += 1;
    }
    let total = statuses.len() as f64;
    let mut rows: Vec<FunnelRow> = counts
        .into_iter()
        .map(|(status, count)| FunnelRow {
            status: status.to_owned(),
            count,
            pct: round1(count as f64 / total * 100.0),
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.status.cmp(&b.status)));
    rows
}

/// `round(fraction * n)` ids chosen by a seeded ChaCha8 stream, returned in
/// input order.
pub fn audit_sample<T: Clone>(ids: &[T], fraction: f64, seed: u64) -> Result<Vec<T>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(ScrubError::Config(format!("fraction {fraction} outside [0, 1]")));
    }
    let k = (fraction * ids.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, ids.len(), k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| ids[i].clone()).collect())
}

fn csv_err(e: csv::Error) -> ScrubError {
    ScrubError::Config(format!("CSV output: {e}"))
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut out: W) -> Result<()> {
    writeln!(out, "{METHOD_NOTE}").map_err(|e| ScrubError::io("cannot write summary", e))?;
    write_rows(rows, out)
}

pub fn write_rows<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| ScrubError::io("cannot write CSV", e))
}
