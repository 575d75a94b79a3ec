//! Command-line workflows: generate instance files, validate a hypothesis,
//! run samplers over a suite and report aggregate tables.

pub mod config;
pub mod report;

use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hypospace_core::harness::{
    log_file_name, run_instances, RemoteConfig, RetryPolicy, SamplerConfig, SamplerKind,
    TemplateSet,
};
use hypospace_core::metrics::Posterior;
use hypospace_core::{Error, Instance, Outcome, TaskKind};

pub use config::SuiteConfig;
use report::{build_report, load_logs, write_files, ReportOptions, ScoredLog};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_NOT_VALID: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "hypospace",
    version,
    about = "Generate, run and score hypothesis-space suites"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Write instance files with their admissible sets.
    Gen(SuiteArgs),
    /// Run a sampler over a suite and write JSONL logs plus summary CSVs.
    Run(RunArgs),
    /// Check one hypothesis against an instance file.
    Validate(ValidateArgs),
    /// Aggregate a directory of run logs into tables and CSVs.
    Report(ReportArgs),
}

#[derive(Debug, Args, Default)]
pub struct SuiteArgs {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<TaskKind>,
    /// Difficulty names, comma separated (`1..3`, `nodes=N`, `tp=N`, `basic|extended|full`).
    #[arg(long, value_delimiter = ',')]
    pub difficulty: Vec<String>,
    /// Instances per difficulty.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Causal node count.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Causal intervention count.
    #[arg(long)]
    pub interventions: Option<usize>,
    /// Voxel occupied-column count.
    #[arg(long)]
    pub tp: Option<usize>,
    /// Voxel grid side.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Voxel height budget.
    #[arg(long)]
    pub height: Option<usize>,
    /// Suppress wall-clock fields so reruns are byte-identical.
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    #[command(flatten)]
    pub suite: SuiteArgs,
    /// oracle, random, scripted or remote.
    #[arg(long)]
    pub sampler: Option<SamplerKind>,
    /// Seed for the random sampler; defaults to the suite seed.
    #[arg(long)]
    pub sampler_seed: Option<u64>,
    /// Emissions for the scripted sampler: one per line, or blocks separated by `---` lines.
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long = "n-cap")]
    pub n_cap: Option<usize>,
    /// Proposals per run, overriding the admissible-set default.
    #[arg(long)]
    pub n: Option<usize>,
    /// Use existing instance files from this directory instead of generating.
    #[arg(long)]
    pub instances: Option<PathBuf>,
    /// Chat-completions URL for the remote sampler.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub max_attempts: Option<u32>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Instance JSON file.
    #[arg(long)]
    pub instance: PathBuf,
    /// Hypothesis text; read from stdin when absent.
    #[arg(long)]
    pub hypothesis: Option<String>,
    /// File holding the hypothesis text.
    #[arg(long, conflicts_with = "hypothesis")]
    pub hypothesis_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of run logs, or a run output directory containing `logs/`.
    #[arg(long)]
    pub logs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Plausibility threshold for the creativity count.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Posterior for creativity measures: empirical or uniform.
    #[arg(long, default_value = "empirical", value_parser = parse_posterior)]
    pub posterior: Posterior,
    /// Also score runs that ended early.
    #[arg(long)]
    pub include_incomplete: bool,
}

fn parse_posterior(s: &str) -> Result<Posterior, String> {
    match s {
        "empirical" => Ok(Posterior::Empirical),
        "uniform" | "uniform_admissible" => Ok(Posterior::UniformAdmissible),
        _ => Err(format!("unknown posterior `{s}`")),
    }
}

/// Merges a config file (if any) with flags.
pub fn resolve_suite(args: &SuiteArgs) -> Result<SuiteConfig, CliError> {
    let mut c = match (&args.config, args.task) {
        (Some(path), _) => SuiteConfig::load(path)?,
        (None, Some(task)) => SuiteConfig::new(task),
        (None, None) => {
            return Err(CliError::Usage(
                "either --task or --config is required".into(),
            ))
        }
    };
    if let Some(t) = args.task {
        c.task = t;
    }
    if !args.difficulty.is_empty() {
        c.difficulty = args.difficulty.clone();
    }
    macro_rules! take {
        ($($f:ident),*) => { $( if args.$f.is_some() { c.$f = args.$f.clone(); } )* };
    }
    take!(nodes, interventions, tp, grid, height, out);
    if let Some(n) = args.count {
        c.count = n;
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    c.deterministic |= args.deterministic;
    Ok(c)
}

/// Splits a script file into emissions.
pub fn parse_script(text: &str) -> Vec<String> {
    if text.lines().any(|l| l.trim() == "---") {
        let mut out = Vec::new();
        let mut cur: Vec<&str> = Vec::new();
        for line in text.lines() {
            if line.trim() == "---" {
                out.push(cur.join("\n").trim().to_string());
                cur.clear();
            } else {
                cur.push(line);
            }
        }
        out.push(cur.join("\n").trim().to_string());
        out.retain(|s| !s.is_empty());
        out
    } else {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect()
    }
}

pub fn resolve_run(args: &RunArgs) -> Result<SuiteConfig, CliError> {
    let mut c = resolve_suite(&args.suite)?;
    if let Some(kind) = args.sampler {
        let seed = c.seed;
        c.sampler = match kind {
            SamplerKind::Oracle => SamplerConfig::oracle(),
            SamplerKind::RandomValid => SamplerConfig::random_valid(seed),
            SamplerKind::Scripted => SamplerConfig::scripted(Vec::new()),
            SamplerKind::Remote => SamplerConfig::remote(RemoteConfig::default()),
        };
    }
    if let Some(s) = args.sampler_seed {
        c.sampler.seed = s;
    }
    if let Some(path) = &args.script {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        c.sampler.script = parse_script(&text);
    }
    if c.sampler.kind == SamplerKind::Scripted && c.sampler.script.is_empty() {
        return Err(CliError::Usage(
            "the scripted sampler needs --script with at least one emission".into(),
        ));
    }
    if c.sampler.kind == SamplerKind::Remote {
        let r = c.sampler.remote.get_or_insert_with(RemoteConfig::default);
        if let Some(v) = &args.endpoint {
            r.endpoint = v.clone();
        }
        if let Some(v) = &args.model {
            r.model = v.clone();
        }
        if args.temperature.is_some() {
            r.temperature = args.temperature;
        }
        if args.max_tokens.is_some() {
            r.max_tokens = args.max_tokens;
        }
        if let Some(v) = args.max_attempts {
            r.retry = RetryPolicy {
                max_attempts: v,
                ..r.retry.clone()
            };
        }
        if let Some(v) = &args.api_key_env {
            r.api_key_env = v.clone();
        }
        if r.endpoint.is_empty() || r.model.is_empty() {
            return Err(CliError::Usage(
                "the remote sampler needs --endpoint and --model".into(),
            ));
        }
    }
    if let Some(v) = args.n_cap {
        c.n_cap = v;
    }
    if args.n.is_some() {
        c.n = args.n;
    }
    if c.n_cap == 0 || c.n == Some(0) {
        return Err(CliError::Usage("proposal counts must be positive".into()));
    }
    Ok(c)
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Generates the suite's instances, skipping (with a warning) any whose
/// enumeration exceeds its limit, and writes them under `<out>/instances`.
pub fn cmd_gen(config: &SuiteConfig) -> Result<Vec<Instance>, CliError> {
    let plan = config.plan()?;
    let digest = config.digest();
    let dir = config.out_dir().join("instances");
    create_dir(&dir)?;
    let mut instances = Vec::new();
    for level in &plan.levels {
        for i in 0..plan.per_level {
            let mut inst = match level.generate(plan.seed, i) {
                Ok(inst) => inst,
                Err(e @ Error::LimitExceeded(_)) => {
                    eprintln!(
                        "warning: skipping instance {i} of {}: {e}",
                        level.difficulty().label
                    );
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            inst.meta.config_digest = Some(digest.clone());
            let mut text = inst.to_json()?;
            text.push('\n');
            write_file(&dir.join(format!("{}.json", inst.id())), text)?;
            instances.push(inst);
        }
    }
    // The output directory is left out so the file is identical wherever
    // the suite is written.
    let mut portable = config.clone();
    portable.out = None;
    let mut cfg = portable.to_json();
    cfg.push('\n');
    write_file(&config.out_dir().join("config.json"), cfg)?;
    Ok(instances)
}

/// Loads every `*.json` instance file in `dir`, in name order.
pub fn load_instances(dir: &Path) -> Result<Vec<Instance>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            Instance::from_json(&text)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
        })
        .collect()
}

#[derive(Debug)]
pub struct Verdict {
    pub category: &'static str,
    pub canonical: Option<String>,
    pub detail: Option<String>,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        self.category == "valid"
    }
}

pub fn cmd_validate(instance_path: &Path, hypothesis: &str) -> Result<Verdict, CliError> {
    let text =
        std::fs::read_to_string(instance_path).map_err(|e| CliError::io(instance_path, e))?;
    let inst = Instance::from_json(&text).map_err(|e| {
        CliError::Runtime(format!(
            "malformed instance file {}: {e}",
            instance_path.display()
        ))
    })?;
    let a = inst.assess(hypothesis);
    let (category, detail) = match a.outcome {
        Outcome::Valid => ("valid", None),
        Outcome::Invalid => ("invalid", None),
        Outcome::ConstraintViolation(m) => ("constraint_violation", Some(m)),
        Outcome::ParseFailure(m) => ("parse_failure", Some(m)),
    };
    Ok(Verdict {
        category,
        canonical: a.canonical,
        detail,
    })
}

#[derive(Debug)]
pub struct RunOutcome {
    pub logs: Vec<hypospace_core::harness::RunLog>,
    pub incomplete: Vec<String>,
}

/// Runs the configured sampler over the suite. Writes instance files, one
/// JSONL log per run, `summary.csv`, `entropy.csv` and `manifest.json`
/// under the output directory.
pub fn cmd_run(config: &SuiteConfig, instances_dir: Option<&Path>) -> Result<RunOutcome, CliError> {
    let out = config.out_dir();
    let instances = match instances_dir {
        Some(dir) => load_instances(dir)?,
        None => cmd_gen(config)?,
    };
    if instances.is_empty() {
        return Err(CliError::Runtime("no instances to run".into()));
    }
    let logs_dir = out.join("logs");
    create_dir(&logs_dir)?;
    let logs = run_instances(
        &instances,
        &config.sampler,
        &config.run_options(),
        &TemplateSet::builtin(),
        Some(&logs_dir),
    )?;
    let label = config.sampler.label();
    let mut scored = Vec::new();
    let mut incomplete = Vec::new();
    for (inst, log) in instances.iter().zip(&logs) {
        let file = log_file_name(inst.id(), &label);
        match log.metrics() {
            Some(m) if log.complete() => {
                println!(
                    "{} {} N={} |H_O|={} VR={:.4} NR={:.4} RR={:.4}",
                    inst.id(),
                    label,
                    m.n,
                    m.h_o_size,
                    m.vr,
                    m.nr,
                    m.rr
                );
                scored.push(ScoredLog {
                    file,
                    log: log.clone(),
                    metrics: m.clone(),
                });
            }
            _ => {
                let reason = log
                    .footer
                    .as_ref()
                    .and_then(|f| f.abort_reason.clone())
                    .unwrap_or_default();
                eprintln!("{} {} incomplete: {reason}", inst.id(), label);
                incomplete.push(file);
            }
        }
    }
    let opts = ReportOptions::default();
    write_file(
        &out.join("summary.csv"),
        report::summary_csv(&scored, &opts)?,
    )?;
    write_file(&out.join("entropy.csv"), report::entropy_csv(&scored)?)?;
    let manifest = serde_json::json!({
        "config_digest": config.digest(),
        "seed": config.seed,
        "sampler": label,
        "sampler_digest": config.sampler.digest(),
        "instances": instances.iter().map(|i| i.id().to_string()).collect::<Vec<_>>(),
        "incomplete": incomplete,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_file(&out.join("manifest.json"), text)?;
    Ok(RunOutcome { logs, incomplete })
}

/// Aggregates the logs in `logs_dir` and writes the report files to `out`.
/// Returns the markdown table.
pub fn cmd_report(logs_dir: &Path, out: &Path, opts: &ReportOptions) -> Result<String, CliError> {
    let nested = logs_dir.join("logs");
    let dir = if nested.is_dir() {
        nested
    } else {
        logs_dir.to_path_buf()
    };
    let (logs, skipped) = load_logs(&dir, opts.include_incomplete)?;
    let files = build_report(&logs, &skipped, opts)?;
    create_dir(out)?;
    write_files(out, &files)?;
    Ok(String::from_utf8_lossy(&files[0].1).into_owned())
}

/// Executes a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Gen(args) => {
            let config = resolve_suite(&args)?;
            let n = cmd_gen(&config)?.len();
            println!(
                "wrote {n} instance file(s) to {}",
                config.out_dir().join("instances").display()
            );
            Ok(EXIT_OK)
        }
        Command::Run(args) => {
            let config = resolve_run(&args)?;
            let outcome = cmd_run(&config, args.instances.as_deref())?;
            Ok(if outcome.incomplete.is_empty() {
                EXIT_OK
            } else {
                EXIT_RUNTIME
            })
        }
        Command::Validate(args) => {
            let text = match (&args.hypothesis, &args.hypothesis_file) {
                (Some(h), _) => h.clone(),
                (None, Some(p)) => std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
                (None, None) => {
                    let mut s = String::new();
                    std::io::stdin()
                        .read_to_string(&mut s)
                        .map_err(|e| CliError::io(Path::new("<stdin>"), e))?;
                    s
                }
            };
            let v = cmd_validate(&args.instance, &text)?;
            println!("category: {}", v.category);
            if let Some(c) = &v.canonical {
                println!("canonical: {c}");
            }
            if let Some(d) = &v.detail {
                println!("detail: {d}");
            }
            Ok(if v.is_valid() {
                EXIT_OK
            } else {
                EXIT_NOT_VALID
            })
        }
        Command::Report(args) => {
            if !(0.0..1.0).contains(&args.epsilon) {
                return Err(CliError::Usage("--epsilon must lie in [0, 1)".into()));
            }
            let opts = ReportOptions {
                epsilon: args.epsilon,
                posterior: args.posterior,
                include_incomplete: args.include_incomplete,
            };
            let table = cmd_report(&args.logs, &args.out, &opts)?;
            print!("{table}");
            Ok(EXIT_OK)
        }
    }
}
