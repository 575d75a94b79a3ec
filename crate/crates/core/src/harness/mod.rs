//! Drives samplers over instances and records every proposal as JSON lines.
//!
//! A run log has one `run_header` line, one `proposal` line per emission and
//! a closing `summary` line. Lines are written as soon as they are known, so
//! an interrupted run leaves a readable prefix.

pub mod prompt;
pub mod remote;
pub mod sampler;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    score_run, AdmissibleSet, Category, MetricsSummary, ProposalRecord, RunClassifier,
};
use crate::task::{Difficulty, Instance, LevelParams, Outcome, TaskKind};

pub use prompt::{render_prompt, SamplerContext, TemplateSet};
pub use remote::{send_chat, ChatReply, RemoteConfig, RetryPolicy, Usage};
pub use sampler::{Emission, Sampler, SamplerConfig, SamplerKind};

/// Default upper bound on proposals per run.
pub const DEFAULT_N_CAP: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    /// Proposals per run; defaults to `min(|H_O|, n_cap)`.
    pub n_override: Option<usize>,
    pub n_cap: usize,
    /// Omit wall-clock fields so logs are byte-identical across reruns.
    pub deterministic: bool,
    /// Template id; defaults to the task name.
    pub template_id: Option<String>,
    pub config_digest: Option<String>,
    /// Seed of the suite the instance came from, recorded in the header.
    pub suite_seed: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            n_override: None,
            n_cap: DEFAULT_N_CAP,
            deterministic: false,
            template_id: None,
            config_digest: None,
            suite_seed: None,
        }
    }
}

impl RunOptions {
    pub fn proposals_for(&self, instance: &Instance) -> usize {
        self.n_override.unwrap_or_else(|| {
            usize::try_from(instance.admissible_size())
                .unwrap_or(usize::MAX)
                .min(self.n_cap)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub instance: String,
    pub task: TaskKind,
    pub difficulty: Difficulty,
    pub sampler: String,
    pub sampler_config: SamplerConfig,
    pub sampler_digest: String,
    pub template: String,
    pub n: usize,
    pub h_o_size: u64,
    pub n_cap: usize,
    pub instance_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedProposal {
    pub index: usize,
    pub raw: String,
    pub category: Category,
    #[serde(default)]
    pub canonical: Option<String>,
    pub valid: bool,
    pub novel: bool,
    /// Parse or constraint message, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<u64>,
    #[serde(default)]
    pub retries: u32,
}

impl LoggedProposal {
    pub fn record(&self) -> ProposalRecord {
        ProposalRecord {
            index: self.index,
            raw: self.raw.clone(),
            canonical: self.canonical.clone(),
            category: self.category,
            valid: self.valid,
            novel: self.novel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFooter {
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count: Option<u64>,
    pub retries: u64,
    pub metrics: Option<MetricsSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogLine {
    RunHeader(Box<RunHeader>),
    Proposal(LoggedProposal),
    Summary(RunFooter),
}

/// A complete or partial run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: RunHeader,
    pub proposals: Vec<LoggedProposal>,
    /// Absent when the log was cut off before the summary line.
    pub footer: Option<RunFooter>,
}

impl RunLog {
    pub fn records(&self) -> Vec<ProposalRecord> {
        self.proposals.iter().map(LoggedProposal::record).collect()
    }

    pub fn complete(&self) -> bool {
        self.footer.as_ref().is_some_and(|f| f.complete)
    }

    pub fn metrics(&self) -> Option<&MetricsSummary> {
        self.footer.as_ref().and_then(|f| f.metrics.as_ref())
    }

    pub fn write_jsonl(&self, out: &mut dyn Write) -> Result<()> {
        write_line(out, &LogLine::RunHeader(Box::new(self.header.clone())))?;
        for p in &self.proposals {
            write_line(out, &LogLine::Proposal(p.clone()))?;
        }
        if let Some(f) = &self.footer {
            write_line(out, &LogLine::Summary(f.clone()))?;
        }
        Ok(())
    }
}

fn write_line(out: &mut dyn Write, line: &LogLine) -> Result<()> {
    serde_json::to_writer(&mut *out, line)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn token_total(proposals: &[LoggedProposal]) -> Option<u64> {
    proposals
        .iter()
        .filter_map(|p| p.tokens)
        .reduce(|a, b| a + b)
}

fn summarize(header: &RunHeader, proposals: &[LoggedProposal]) -> Result<Option<MetricsSummary>> {
    if proposals.is_empty() {
        return Ok(None);
    }
    let records: Vec<ProposalRecord> = proposals.iter().map(LoggedProposal::record).collect();
    // Valid means admissible, so the count is enough for scoring.
    let mut s = score_run(&records, &AdmissibleSet::Counted(header.h_o_size))?;
    s.token_count = token_total(proposals);
    Ok(Some(s))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Runs one sampler on one instance, streaming the log to `sink`.
///
/// A sampler failure ends the run early with `complete: false`; the partial
/// log and its metrics are still returned. Errors are reserved for setup
/// problems and sink I/O.
pub fn run_instance(
    instance: &Instance,
    sampler: &SamplerConfig,
    options: &RunOptions,
    templates: &TemplateSet,
    mut sink: Option<&mut dyn Write>,
) -> Result<RunLog> {
    let template_id = options
        .template_id
        .clone()
        .unwrap_or_else(|| instance.task().name().to_string());
    templates.get(&template_id)?;
    let n = options.proposals_for(instance);
    if n == 0 {
        return Err(Error::InvalidParameters(
            "run needs at least one proposal".into(),
        ));
    }
    let mut state = sampler.build(instance)?;
    let clock = Instant::now();
    let header = RunHeader {
        instance: instance.id().to_string(),
        task: instance.task(),
        difficulty: instance.meta.difficulty.clone(),
        sampler: sampler.label(),
        sampler_config: sampler.clone(),
        sampler_digest: sampler.digest(),
        template: template_id.clone(),
        n,
        h_o_size: instance.admissible_size(),
        n_cap: options.n_cap,
        instance_seed: instance.meta.seed,
        suite_seed: options.suite_seed,
        config_digest: options.config_digest.clone(),
        started_at_ms: (!options.deterministic).then(now_ms),
    };
    if let Some(out) = sink.as_deref_mut() {
        write_line(out, &LogLine::RunHeader(Box::new(header.clone())))?;
    }

    let mut ctx = SamplerContext::new(instance, template_id);
    let mut classifier = RunClassifier::new();
    let mut proposals = Vec::with_capacity(n);
    let mut retries = 0u64;
    let mut abort_reason = None;
    for _ in 0..n {
        let prompt = if state.uses_prompt() {
            render_prompt(&ctx, templates)?
        } else {
            String::new()
        };
        let emission = match state.propose(&ctx, &prompt) {
            Ok(e) => e,
            Err(e) => {
                abort_reason = Some(e.to_string());
                break;
            }
        };
        retries += u64::from(emission.retries);
        let assessment = instance.assess(&emission.text);
        let detail = match &assessment.outcome {
            Outcome::ParseFailure(m) | Outcome::ConstraintViolation(m) => Some(m.clone()),
            _ => None,
        };
        let r = classifier.push(&emission.text, &assessment);
        let logged = LoggedProposal {
            index: r.index,
            raw: r.raw.clone(),
            category: r.category,
            canonical: r.canonical.clone(),
            valid: r.valid,
            novel: r.novel,
            detail,
            tokens: emission.tokens,
            retries: emission.retries,
        };
        if let Some(out) = sink.as_deref_mut() {
            write_line(out, &LogLine::Proposal(logged.clone()))?;
        }
        proposals.push(logged);
        ctx.record(emission.text);
    }

    let footer = RunFooter {
        complete: abort_reason.is_none(),
        abort_reason,
        wall_clock_ms: (!options.deterministic).then(|| clock.elapsed().as_millis() as u64),
        token_count: token_total(&proposals),
        retries,
        metrics: summarize(&header, &proposals)?,
    };
    if let Some(out) = sink {
        write_line(out, &LogLine::Summary(footer.clone()))?;
    }
    Ok(RunLog {
        header,
        proposals,
        footer: Some(footer),
    })
}

/// Parses a JSONL run log. A missing summary line is tolerated.
pub fn read_run_log(input: impl Read) -> Result<RunLog> {
    let mut header = None;
    let mut proposals = Vec::new();
    let mut footer = None;
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line)
            .map_err(|e| Error::MalformedLog(format!("line {}: {e}", i + 1)))?;
        match (parsed, header.is_some(), footer.is_some()) {
            (LogLine::RunHeader(h), false, _) => header = Some(*h),
            (LogLine::Proposal(p), true, false) => proposals.push(p),
            (LogLine::Summary(f), true, false) => footer = Some(f),
            _ => {
                return Err(Error::MalformedLog(format!(
                    "line {}: unexpected record",
                    i + 1
                )))
            }
        }
    }
    let header = header.ok_or_else(|| Error::MalformedLog("missing run_header line".into()))?;
    Ok(RunLog {
        header,
        proposals,
        footer,
    })
}

pub fn read_run_log_file(path: &Path) -> Result<RunLog> {
    read_run_log(File::open(path)?)
}

/// Recomputes metrics from the logged categories.
pub fn rescore(log: &RunLog) -> Result<MetricsSummary> {
    summarize(&log.header, &log.proposals)?.ok_or(Error::EmptyRun)
}

/// Re-assesses every logged emission against `instance` and scores the
/// result, ignoring the logged categories.
pub fn replay(log: &RunLog, instance: &Instance) -> Result<MetricsSummary> {
    if log.header.instance != instance.id() {
        return Err(Error::MalformedLog(format!(
            "log is for instance {}, not {}",
            log.header.instance,
            instance.id()
        )));
    }
    let mut classifier = RunClassifier::new();
    for p in &log.proposals {
        classifier.push(&p.raw, &instance.assess(&p.raw));
    }
    let records = classifier.into_records();
    if records.is_empty() {
        return Err(Error::EmptyRun);
    }
    let mut s = score_run(&records, &instance.admissible_set())?;
    s.token_count = token_total(&log.proposals);
    Ok(s)
}

/// File name of the log for one instance and sampler.
pub fn log_file_name(instance_id: &str, sampler_label: &str) -> String {
    let clean: String = sampler_label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{instance_id}__{clean}.jsonl")
}

/// Runs every instance in parallel. With `log_dir`, each run streams to its
/// own JSONL file there. Results keep the input order.
pub fn run_instances(
    instances: &[Instance],
    sampler: &SamplerConfig,
    options: &RunOptions,
    templates: &TemplateSet,
    log_dir: Option<&Path>,
) -> Result<Vec<RunLog>> {
    instances
        .par_iter()
        .map(|inst| match log_dir {
            Some(dir) => {
                let path: PathBuf = dir.join(log_file_name(inst.id(), &sampler.label()));
                let mut w = BufWriter::new(File::create(path)?);
                run_instance(inst, sampler, options, templates, Some(&mut w))
            }
            None => run_instance(inst, sampler, options, templates, None),
        })
        .collect()
}

/// Instances of a benchmark suite: `per_level` instances for each tier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuitePlan {
    pub levels: Vec<LevelParams>,
    pub per_level: usize,
    pub seed: u64,
}

pub fn generate_suite(plan: &SuitePlan) -> Result<Vec<Instance>> {
    let jobs: Vec<(&LevelParams, usize)> = plan
        .levels
        .iter()
        .flat_map(|l| (0..plan.per_level).map(move |i| (l, i)))
        .collect();
    jobs.par_iter()
        .map(|(l, i)| l.generate(plan.seed, *i))
        .collect()
}

pub fn run_suite(
    plan: &SuitePlan,
    sampler: &SamplerConfig,
    options: &RunOptions,
    templates: &TemplateSet,
    log_dir: Option<&Path>,
) -> Result<(Vec<Instance>, Vec<RunLog>)> {
    let instances = generate_suite(plan)?;
    let logs = run_instances(&instances, sampler, options, templates, log_dir)?;
    Ok((instances, logs))
}
