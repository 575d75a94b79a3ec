//! Tables and CSV files derived from a directory of run logs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hypospace_core::harness::{read_run_log_file, rescore, RunLog};
use hypospace_core::metrics::{
    aggregate, creativity_measures, entropy_series, run_patterns, GroupKey, Metric, Posterior,
};
use hypospace_core::{AdmissibleSet, Category, MetricsSummary};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    /// Plausibility threshold for the creativity count.
    pub epsilon: f64,
    pub posterior: Posterior,
    /// Score runs that ended early instead of skipping them.
    pub include_incomplete: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            posterior: Posterior::Empirical,
            include_incomplete: false,
        }
    }
}

/// A log together with its file name and verified metrics.
#[derive(Debug, Clone)]
pub struct ScoredLog {
    pub file: String,
    pub log: RunLog,
    pub metrics: MetricsSummary,
}

impl ScoredLog {
    /// Report column: sampler label plus config digest.
    fn column(&self) -> (String, String) {
        (
            self.log.header.sampler.clone(),
            self.log.header.sampler_digest.clone(),
        )
    }
}

/// Reads every `*.jsonl` file in `dir` in name order. Incomplete runs are
/// returned separately unless `include_incomplete` is set.
pub fn load_logs(
    dir: &Path,
    include_incomplete: bool,
) -> Result<(Vec<ScoredLog>, Vec<String>), CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for path in files {
        let name = path
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let log = read_run_log_file(&path)?;
        if !log.complete() && !include_incomplete {
            skipped.push(name);
            continue;
        }
        if log.proposals.is_empty() {
            skipped.push(name);
            continue;
        }
        let metrics = rescore(&log)?;
        if let Some(stored) = log.metrics() {
            if *stored != metrics {
                return Err(CliError::Runtime(format!(
                    "{name}: stored summary does not match its proposals"
                )));
            }
        }
        kept.push(ScoredLog {
            file: name,
            log,
            metrics,
        });
    }
    kept.sort_by(|a, b| {
        let key = |s: &ScoredLog| {
            (
                s.log.header.task,
                s.log.header.difficulty.clone(),
                s.log.header.instance.clone(),
                s.column(),
            )
        };
        key(a).cmp(&key(b))
    });
    Ok((kept, skipped))
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    task: &'a str,
    difficulty: &'a str,
    instance_id: &'a str,
    sampler: &'a str,
    #[serde(rename = "N")]
    n: usize,
    h_o_size: u64,
    vr: f64,
    nr: f64,
    rr: f64,
    coverage: f64,
    parse_failures: usize,
    constraint_violations: usize,
    invalid: usize,
    dup_exact: usize,
    dup_canonical: usize,
    c_count: u64,
    c_entropy_bits: f64,
}

#[derive(Debug, Serialize)]
struct EntropyRow<'a> {
    instance_id: &'a str,
    t: usize,
    #[serde(rename = "H_t")]
    h_t: f64,
    #[serde(rename = "delta_I_t")]
    delta_i_t: f64,
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Runtime(format!("csv buffer: {e}")))
}

/// One row per run with the per-instance metrics.
pub fn summary_csv(logs: &[ScoredLog], opts: &ReportOptions) -> Result<Vec<u8>, CliError> {
    let mut rows = Vec::with_capacity(logs.len());
    for s in logs {
        let h = &s.log.header;
        let m = &s.metrics;
        let c = creativity_measures(
            &s.log.records(),
            &AdmissibleSet::Counted(h.h_o_size),
            opts.epsilon,
            opts.posterior,
        )?;
        rows.push(SummaryRow {
            task: h.task.name(),
            difficulty: &h.difficulty.label,
            instance_id: &h.instance,
            sampler: &h.sampler,
            n: m.n,
            h_o_size: m.h_o_size,
            vr: m.vr,
            nr: m.nr,
            rr: m.rr,
            coverage: m.coverage,
            parse_failures: m.count(Category::ParseFailure),
            constraint_violations: m.count(Category::ConstraintViolation),
            invalid: m.count(Category::Invalid),
            dup_exact: m.count(Category::DuplicateExact),
            dup_canonical: m.count(Category::DuplicateCanonical),
            c_count: c.count,
            c_entropy_bits: c.entropy,
        });
    }
    csv_bytes(rows)
}

/// Cumulative pattern entropy and its steps for each run.
pub fn entropy_csv<'a>(logs: impl IntoIterator<Item = &'a ScoredLog>) -> Result<Vec<u8>, CliError> {
    let mut rows = Vec::new();
    for s in logs {
        let records = s.log.records();
        for p in entropy_series(&run_patterns(&records)) {
            rows.push(EntropyRow {
                instance_id: &s.log.header.instance,
                t: p.t,
                h_t: p.entropy,
                delta_i_t: p.info_gain,
            });
        }
    }
    csv_bytes(rows)
}

#[derive(Debug, Serialize)]
struct FailureRow<'a> {
    task: &'a str,
    difficulty: &'a str,
    sampler: &'a str,
    category: &'a str,
    count: usize,
    fraction: f64,
}

/// Category totals per task, difficulty and sampler.
pub fn failures_csv(logs: &[ScoredLog]) -> Result<Vec<u8>, CliError> {
    let mut totals: BTreeMap<
        (hypospace_core::TaskKind, hypospace_core::Difficulty, String),
        BTreeMap<Category, usize>,
    > = BTreeMap::new();
    for s in logs {
        let h = &s.log.header;
        let entry = totals
            .entry((h.task, h.difficulty.clone(), h.sampler.clone()))
            .or_default();
        for c in Category::ALL {
            *entry.entry(c).or_default() += s.metrics.count(c);
        }
    }
    let mut rows = Vec::new();
    for ((task, difficulty, sampler), counts) in &totals {
        let n: usize = counts.values().sum();
        for (c, &k) in counts {
            rows.push(FailureRow {
                task: task.name(),
                difficulty: &difficulty.label,
                sampler,
                category: c.name(),
                count: k,
                fraction: if n == 0 { 0.0 } else { k as f64 / n as f64 },
            });
        }
    }
    csv_bytes(rows)
}

#[derive(Debug, Serialize)]
struct CoverageRow<'a> {
    task: &'a str,
    difficulty: &'a str,
    instance_id: &'a str,
    sampler: &'a str,
    h_o_size: u64,
    explored: f64,
    unexplored: f64,
}

pub fn coverage_csv(logs: &[ScoredLog]) -> Result<Vec<u8>, CliError> {
    csv_bytes(logs.iter().map(|s| CoverageRow {
        task: s.log.header.task.name(),
        difficulty: &s.log.header.difficulty.label,
        instance_id: &s.log.header.instance,
        sampler: &s.log.header.sampler,
        h_o_size: s.metrics.h_o_size,
        explored: s.metrics.coverage,
        unexplored: 1.0 - s.metrics.coverage,
    }))
}

#[derive(Debug, Serialize)]
struct CurveRow<'a> {
    instance_id: &'a str,
    sampler: &'a str,
    k: usize,
    rr: f64,
}

pub fn rr_at_k_csv(logs: &[ScoredLog]) -> Result<Vec<u8>, CliError> {
    csv_bytes(logs.iter().flat_map(|s| {
        s.metrics
            .rr_at_k
            .iter()
            .enumerate()
            .map(|(i, &rr)| CurveRow {
                instance_id: &s.log.header.instance,
                sampler: &s.log.header.sampler,
                k: i + 1,
                rr,
            })
    }))
}

/// Column headers: the sampler label, or label plus digest when two
/// configurations share a label.
fn column_names(logs: &[ScoredLog]) -> BTreeMap<(String, String), String> {
    let columns: BTreeSet<(String, String)> = logs.iter().map(ScoredLog::column).collect();
    let mut per_label: BTreeMap<&str, usize> = BTreeMap::new();
    for (label, _) in &columns {
        *per_label.entry(label).or_default() += 1;
    }
    columns
        .iter()
        .map(|(label, digest)| {
            let name = if per_label[label.as_str()] > 1 {
                format!("{label}@{}", &digest[..digest.len().min(8)])
            } else {
                label.clone()
            };
            ((label.clone(), digest.clone()), name)
        })
        .collect()
}

/// Task × difficulty × metric grid with one column per sampler, each cell
/// the mean ± sample standard deviation across instances.
pub fn markdown_table(logs: &[ScoredLog], skipped: usize) -> String {
    let names = column_names(logs);
    let columns: Vec<&(String, String)> = names.keys().collect();
    let rows = aggregate(logs.iter().map(|s| {
        let (label, digest) = s.column();
        (
            GroupKey {
                task: s.log.header.task,
                difficulty: s.log.header.difficulty.clone(),
                sampler: format!("{label}\u{0}{digest}"),
            },
            &s.metrics,
        )
    }));
    let mut cells: BTreeMap<
        (hypospace_core::TaskKind, hypospace_core::Difficulty, Metric),
        BTreeMap<String, String>,
    > = BTreeMap::new();
    let mut counts: BTreeMap<(hypospace_core::TaskKind, hypospace_core::Difficulty), usize> =
        BTreeMap::new();
    for r in &rows {
        cells
            .entry((r.task, r.difficulty.clone(), r.metric))
            .or_default()
            .insert(r.sampler.clone(), r.formatted());
        let c = counts.entry((r.task, r.difficulty.clone())).or_default();
        *c = (*c).max(r.instances);
    }

    let digests: BTreeSet<&str> = logs
        .iter()
        .filter_map(|s| s.log.header.config_digest.as_deref())
        .collect();
    let seeds: BTreeSet<u64> = logs
        .iter()
        .filter_map(|s| s.log.header.suite_seed)
        .collect();
    let join = |v: Vec<String>| {
        if v.is_empty() {
            "none".to_string()
        } else {
            v.join(", ")
        }
    };

    let mut out = String::new();
    out.push_str("# Hypothesis-space report\n\n");
    let _ = writeln!(
        out,
        "Runs scored: {}; incomplete runs skipped: {skipped}",
        logs.len()
    );
    let _ = writeln!(
        out,
        "Config digests: {}",
        join(digests.iter().map(|d| d.to_string()).collect())
    );
    let _ = writeln!(
        out,
        "Seeds: {}",
        join(seeds.iter().map(|s| s.to_string()).collect())
    );
    out.push_str("\nCells are mean ± sample standard deviation across instances.\n\n");
    out.push_str("| Task | Difficulty | Instances | Metric |");
    for c in &columns {
        let _ = write!(out, " {} |", names[*c]);
    }
    out.push_str("\n|---|---|---|---|");
    for _ in &columns {
        out.push_str("---|");
    }
    out.push('\n');
    for ((task, difficulty, metric), by_sampler) in &cells {
        let _ = write!(
            out,
            "| {} | {} | {} | {} |",
            task,
            difficulty.label,
            counts[&(*task, difficulty.clone())],
            metric.name()
        );
        for (label, digest) in &columns {
            let cell = by_sampler
                .get(&format!("{label}\u{0}{digest}"))
                .map(String::as_str)
                .unwrap_or("n/a");
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    out
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Files produced by [`build_report`], as (relative path, contents).
pub type ReportFiles = Vec<(String, Vec<u8>)>;

/// Renders every report artifact in memory. The output depends only on the
/// logs passed in.
pub fn build_report(
    logs: &[ScoredLog],
    skipped: &[String],
    opts: &ReportOptions,
) -> Result<ReportFiles, CliError> {
    if logs.is_empty() {
        return Err(CliError::Runtime("no complete run logs to report".into()));
    }
    let mut files: ReportFiles = vec![
        (
            "report.md".into(),
            markdown_table(logs, skipped.len()).into_bytes(),
        ),
        ("summary.csv".into(), summary_csv(logs, opts)?),
        ("failures.csv".into(), failures_csv(logs)?),
        ("coverage.csv".into(), coverage_csv(logs)?),
        ("rr_at_k.csv".into(), rr_at_k_csv(logs)?),
    ];
    for ((label, digest), name) in column_names(logs) {
        let subset = logs
            .iter()
            .filter(|s| s.column() == (label.clone(), digest.clone()));
        files.push((
            format!("entropy/{}.csv", sanitize(&name)),
            entropy_csv(subset)?,
        ));
    }
    let mut manifest = serde_json::json!({
        "config_digests": logs.iter().filter_map(|s| s.log.header.config_digest.clone()).collect::<BTreeSet<_>>(),
        "seeds": logs.iter().filter_map(|s| s.log.header.suite_seed).collect::<BTreeSet<_>>(),
        "epsilon": opts.epsilon,
        "posterior": opts.posterior,
        "logs": logs.iter().map(|s| s.file.clone()).collect::<Vec<_>>(),
        "skipped": skipped,
    });
    manifest["outputs"] = files
        .iter()
        .map(|(name, bytes)| {
            (
                name.clone(),
                serde_json::Value::String(hex::encode(Sha256::digest(bytes))),
            )
        })
        .collect::<serde_json::Map<_, _>>()
        .into();
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    files.push(("manifest.json".into(), text.into_bytes()));
    Ok(files)
}

pub fn write_files(dir: &Path, files: &ReportFiles) -> Result<(), CliError> {
    for (name, bytes) in files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}
