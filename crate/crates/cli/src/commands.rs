use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use scrub_core::ingest::{ingest_archive, ingest_bundle, ingest_remote};
use scrub_core::metadata::{self, Sizes};
use scrub_core::pipeline::{gate_check, run_pipeline, PipelineOutcome, StageLog};
use scrub_core::repo::git::{load_repository, load_repository_with_size, write_bundle};
use scrub_core::stats;
use scrub_core::{Channel, Config, MetadataRecord, RepoModel, Salt, ScrubError};

use crate::exit;

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn threshold(cfg: &Config, arg: Option<f64>) -> f64 {
    arg.unwrap_or(cfg.threshold_mb)
}

fn ingest_model(channel: Channel, source: &str, threshold_mb: f64) -> scrub_core::Result<(RepoModel, scrub_core::IngestReport)> {
    match channel {
        Channel::Bundle => ingest_bundle(Path::new(source)),
        Channel::Archive => ingest_archive(Path::new(source), threshold_mb),
        Channel::Remote => ingest_remote(source),
    }
}

fn append_line(path: &Path, line: &str) -> anyhow::Result<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    writeln!(f, "{line}")?;
    Ok(())
}

pub fn ingest(
    cfg: &Config,
    channel: Channel,
    source: &str,
    out: &Path,
    threshold_mb: Option<f64>,
    ok_file: Option<&Path>,
) -> anyhow::Result<u8> {
    let (model, mut report) = ingest_model(channel, source, threshold(cfg, threshold_mb))?;
    write_bundle(&model, out)?;
    report.bundle_path = Some(out.to_owned());
    if let Some(ok) = ok_file {
        append_line(ok, source)?;
    }
    print_json(&report)?;
    Ok(exit::OK)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn bundle_size(input: &Path, model: &RepoModel) -> anyhow::Result<u64> {
    if input.is_file() && input.extension().is_none_or(|e| e != "json") {
        return Ok(fs::metadata(input)?.len());
    }
    let tmp = tempfile::tempdir()?;
    let bundle = tmp.path().join("measure.bundle");
    write_bundle(model, &bundle)?;
    Ok(fs::metadata(&bundle)?.len())
}

fn extract_record(cfg: &Config, input: &Path, name: &str) -> anyhow::Result<MetadataRecord> {
    let (model, git_history) = load_repository_with_size(input)?;
    let sizes = Sizes { git_history, bundle: bundle_size(input, &model)? };
    Ok(metadata::extract(&model, name, sizes, &cfg.lang_map()?)?)
}

fn write_record(record: &MetadataRecord, csv: &Path, json: Option<&Path>) -> anyhow::Result<()> {
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    // An existing CSV keeps its rows and gains this one.
    let mut records = Vec::new();
    if fs::metadata(csv).is_ok_and(|m| m.len() > 0) {
        for row in metadata::read_csv(fs::File::open(csv)?)? {
            records.push(row.map_err(|e| anyhow::anyhow!("{}: {e}", csv.display()))?);
        }
    }
    records.push(record.clone());
    let f = fs::File::create(csv).with_context(|| format!("cannot create {}", csv.display()))?;
    metadata::write_csv(&records, f)?;
    if let Some(j) = json {
        fs::write(j, serde_json::to_string_pretty(record)? + "\n")?;
    }
    Ok(())
}

pub fn meta(cfg: &Config, input: &Path, csv: &Path, json: Option<&Path>) -> anyhow::Result<u8> {
    let record = extract_record(cfg, input, &file_stem(input))?;
    for anomaly in metadata::consistency_check(&record) {
        warn!("consistency: {anomaly:?}");
    }
    write_record(&record, csv, json)?;
    print_json(&record)?;
    Ok(exit::OK)
}

pub fn select(csv: &Path) -> anyhow::Result<u8> {
    let f = fs::File::open(csv).with_context(|| format!("cannot open {}", csv.display()))?;
    let rows = metadata::read_csv(f)?;
    let mut all_accepted = !rows.is_empty();
    let mut decisions = Vec::new();
    for row in &rows {
        let decision = metadata::select(row.as_ref().ok());
        all_accepted &= decision.accepted;
        decisions.push(json!({
            "repo_name": row.as_ref().ok().map(|r| r.repo_name.clone()),
            "accepted": decision.accepted,
            "reason": decision.reason,
        }));
        if let Err(e) = row {
            warn!("unparseable row: {e}");
        }
    }
    print_json(&decisions)?;
    Ok(if all_accepted { exit::OK } else { exit::FAIL })
}

fn manifest_paths(bundle: &Path) -> (PathBuf, PathBuf) {
    let dir = bundle.parent().unwrap_or(Path::new(""));
    let name = file_stem(bundle);
    (
        dir.join(format!("{name}.manifest.jsonl")),
        dir.join(format!("{name}.manifest.public.jsonl")),
    )
}

/// Passing output goes to `out`; anything else only under the quarantine dir.
fn write_outcome(outcome: &mut PipelineOutcome, salt: &Salt, out: &Path, quarantine: Option<&Path>) -> anyhow::Result<PathBuf> {
    let target = if outcome.gate.passed {
        out.to_owned()
    } else {
        let dir = match quarantine {
            Some(q) => q.to_owned(),
            None => out.parent().unwrap_or(Path::new("")).join("quarantine"),
        };
        warn!("gate failed, writing to quarantine {}", dir.display());
        dir.join(out.file_name().context("--out needs a file name")?)
    };
    write_bundle(&outcome.repo, &target)?;
    let (internal, public) = manifest_paths(&target);
    fs::write(&internal, outcome.manifest.to_jsonl(salt, true))?;
    fs::write(&public, outcome.manifest.to_jsonl(salt, false))?;
    for p in [&target, &internal, &public] {
        outcome.log.outputs.push(p.display().to_string());
    }
    Ok(target)
}

fn pipeline_config(cfg: &Config, salt: Salt, require_ner: bool) -> anyhow::Result<scrub_core::PipelineConfig> {
    let mut p = cfg.pipeline(salt)?;
    p.require_ner |= require_ner;
    Ok(p)
}

fn report_json(outcome: &PipelineOutcome, output: &Path) -> serde_json::Value {
    json!({
        "output": output,
        "manifest_entries": outcome.manifest.len(),
        "gate": outcome.gate,
        "log": outcome.log,
    })
}

pub fn sanitize(
    cfg: &Config,
    input: &Path,
    out: &Path,
    quarantine: Option<&Path>,
    salt_file: Option<&Path>,
    require_ner: bool,
) -> anyhow::Result<u8> {
    let salt = Salt::resolve(salt_file)?;
    let pcfg = pipeline_config(cfg, salt.clone(), require_ner)?;
    let repo = load_repository(input)?;
    let mut outcome = run_pipeline(&repo, &pcfg)?;
    let written = write_outcome(&mut outcome, &salt, out, quarantine)?;
    print_json(&report_json(&outcome, &written))?;
    Ok(outcome.gate.exit_code as u8)
}

pub fn gate(cfg: &Config, input: &Path, require_ner: bool) -> anyhow::Result<u8> {
    // The gate only scans; this salt never reaches a mask.
    let salt = Salt::new("gate")?;
    let pcfg = pipeline_config(cfg, salt, require_ner)?;
    let repo = load_repository(input)?;
    let report = gate_check(&repo, &pcfg);
    print_json(&report)?;
    Ok(report.exit_code as u8)
}

fn read_statuses(path: &Path) -> anyhow::Result<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h == "status")
        .context("statuses.csv needs a status column")?;
    let mut out = Vec::new();
    for row in rdr.records() {
        out.push(row?.get(col).unwrap_or("").to_owned());
    }
    Ok(out)
}

/// Metadata CSVs in `csv_dir` feed the summary and language tables. The
/// funnel reads `statuses.csv` when present, otherwise the selection
/// outcome of each record.
pub fn report(csv_dir: &Path, out: &Path) -> anyhow::Result<u8> {
    let mut paths: Vec<PathBuf> = fs::read_dir(csv_dir)
        .with_context(|| format!("cannot list {}", csv_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    let mut records = Vec::new();
    let mut statuses = None;
    for p in &paths {
        if p.file_name().is_some_and(|n| n == "statuses.csv") {
            statuses = Some(read_statuses(p)?);
            continue;
        }
        for row in metadata::read_csv(fs::File::open(p)?)? {
            match row {
                Ok(r) => records.push(r),
                Err(e) => warn!("{}: skipping row: {e}", p.display()),
            }
        }
    }
    let statuses = statuses.unwrap_or_else(|| {
        records
            .iter()
            .map(|r| {
                let d = metadata::select(Some(r));
                if d.accepted {
                    "ACCEPTED".to_owned()
                } else {
                    serde_json::to_value(d.reason).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
                }
            })
            .collect()
    });
    let summary = stats::SUMMARY_METRICS
        .iter()
        .map(|m| stats::summarize_records(&records, m))
        .collect::<scrub_core::Result<Vec<_>>>()?;
    fs::create_dir_all(out)?;
    let files = [out.join("summary.csv"), out.join("languages.csv"), out.join("funnel.csv")];
    stats::write_summary_csv(&summary, fs::File::create(&files[0])?)?;
    stats::write_rows(&stats::language_table(&records), fs::File::create(&files[1])?)?;
    stats::write_rows(&stats::funnel(&statuses), fs::File::create(&files[2])?)?;
    print_json(&json!({ "records": records.len(), "outputs": files }))?;
    Ok(exit::OK)
}

pub struct CurateArgs<'a> {
    pub channel: Channel,
    pub source: &'a str,
    pub out_dir: &'a Path,
    pub threshold_mb: Option<f64>,
    pub salt_file: Option<&'a Path>,
    pub quarantine: Option<&'a Path>,
    pub require_ner: bool,
}

fn timed<T>(stages: &mut Vec<StageLog>, stage: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    stages.push(StageLog { stage: stage.into(), millis: start.elapsed().as_millis() });
    info!("{stage} done in {} ms", start.elapsed().as_millis());
    out
}

/// Failures that mean "nothing usable was submitted" rather than a broken host.
fn is_unparseable(e: &ScrubError) -> bool {
    matches!(
        e,
        ScrubError::EmptyTree(_)
            | ScrubError::NoRefs(_)
            | ScrubError::MalformedBundle { .. }
            | ScrubError::EmptyRepository
            | ScrubError::InvalidModel(_)
    )
}

pub fn curate(cfg: &Config, args: CurateArgs<'_>) -> anyhow::Result<u8> {
    let salt = Salt::resolve(args.salt_file)?;
    let pcfg = pipeline_config(cfg, salt.clone(), args.require_ner)?;
    let mut stages = Vec::new();
    let reject = |slug: &str, decision: metadata::SelectionDecision, detail: Option<String>| -> anyhow::Result<u8> {
        print_json(&json!({ "slug": slug, "decision": decision, "detail": detail }))?;
        Ok(exit::REJECTED)
    };
    let unparseable = metadata::select(None);

    let work = tempfile::tempdir()?;
    let ingested = timed(&mut stages, "ingest", || -> anyhow::Result<_> {
        let (model, report) = ingest_model(args.channel, args.source, threshold(cfg, args.threshold_mb))?;
        let bundle = work.path().join(format!("{}.bundle", report.slug));
        write_bundle(&model, &bundle)?;
        Ok((report, bundle))
    });
    let (report, bundle) = match ingested {
        Ok(v) => v,
        Err(e) => match e.downcast_ref::<ScrubError>() {
            Some(se) if is_unparseable(se) => return reject("", unparseable, Some(se.to_string())),
            _ => return Err(e),
        },
    };
    let slug = report.slug.clone();

    let record = timed(&mut stages, "meta", || extract_record(cfg, &bundle, &slug));
    let record = match record {
        Ok(r) => r,
        Err(e) => match e.downcast_ref::<ScrubError>() {
            Some(se) if is_unparseable(se) => return reject(&slug, unparseable, Some(se.to_string())),
            _ => return Err(e),
        },
    };
    fs::create_dir_all(args.out_dir)?;
    let csv = args.out_dir.join(format!("{slug}.csv"));
    write_record(&record, &csv, None)?;

    let decision = timed(&mut stages, "select", || metadata::select(Some(&record)));
    if !decision.accepted {
        return reject(&slug, decision, None);
    }

    let repo = load_repository(&bundle)?;
    let mut outcome = run_pipeline(&repo, &pcfg)?;
    stages.append(&mut outcome.log.stages);
    outcome.log.stages = stages;
    outcome.log.outputs.push(csv.display().to_string());
    let out = args.out_dir.join(format!("{slug}.bundle"));
    let written = write_outcome(&mut outcome, &salt, &out, args.quarantine)?;
    let mut summary = report_json(&outcome, &written);
    summary["slug"] = json!(slug);
    summary["decision"] = json!(decision);
    summary["ingest"] = json!(report);
    print_json(&summary)?;
    Ok(outcome.gate.exit_code as u8)
}
