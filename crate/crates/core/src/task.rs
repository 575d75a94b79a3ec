//! Task-independent view of an instance: observation rendering, hypothesis
//! extraction and assessment, admissible-set access, and the JSON instance
//! file format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::boolexpr::{
    self, canon_expr, parse_expr_line, BoolDifficulty, BoolInstance, ExprSpace, Op,
    PhenotypeObservation,
};
use crate::causal::{
    self, canon_dag, canon_edges, parse_edges, CausalInstance, Dag, InterventionObservation,
};
use crate::error::{Error, Result};
use crate::metrics::AdmissibleSet;
use crate::seed;
use crate::voxel::{self, canon_stack, parse_stack, Projection, VoxelInstance, VoxelStack};

/// Boolean admissible sets larger than this are recomputed on load rather
/// than written into instance files.
pub const MATERIALIZE_CAP: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Causal,
    Voxel,
    Bool,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Causal, TaskKind::Voxel, TaskKind::Bool];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Causal => "causal",
            TaskKind::Voxel => "voxel",
            TaskKind::Bool => "bool",
        }
    }

    /// Header that opens a hypothesis block in sampler output.
    pub fn header(self) -> &'static str {
        match self {
            TaskKind::Causal => "EDGES:",
            TaskKind::Voxel => "LAYERS:",
            TaskKind::Bool => "EXPR:",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "causal" => Ok(TaskKind::Causal),
            "voxel" => Ok(TaskKind::Voxel),
            "bool" | "boolean" => Ok(TaskKind::Bool),
            _ => Err(Error::InvalidParameters(format!("unknown task `{s}`"))),
        }
    }
}

/// Difficulty tier. `level` orders rows in reports; `label` names the
/// generator setting (`nodes=5`, `tp=3`, `basic`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Difficulty {
    pub level: u32,
    pub label: String,
}

impl Difficulty {
    pub fn new(level: u32, label: impl Into<String>) -> Self {
        Self {
            level,
            label: label.into(),
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.level, self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMeta {
    pub id: String,
    pub difficulty: Difficulty,
    pub seed: u64,
    pub config_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskInstance {
    Causal(CausalInstance),
    Voxel(VoxelInstance),
    Bool(BoolInstance),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub meta: InstanceMeta,
    pub body: TaskInstance,
}

/// A well-formed hypothesis of one of the three domains.
#[derive(Debug, Clone, PartialEq)]
pub enum Hypothesis {
    Dag(Dag),
    Stack(VoxelStack),
    Expr(boolexpr::Expr),
}

impl Hypothesis {
    pub fn canonical(&self) -> String {
        match self {
            Hypothesis::Dag(d) => canon_dag(d),
            Hypothesis::Stack(s) => canon_stack(s),
            Hypothesis::Expr(e) => canon_expr(e).to_string(),
        }
    }

    /// Text in the emission schema, parseable by [`Instance::assess`].
    pub fn to_text(&self) -> String {
        match self {
            Hypothesis::Dag(d) => d.to_text(),
            Hypothesis::Stack(s) => s.to_text(),
            Hypothesis::Expr(e) => e.to_text(),
        }
    }
}

/// Verdict on one emission, before novelty is considered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    ParseFailure(String),
    ConstraintViolation(String),
    Invalid,
    Valid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assessment {
    /// Canonical form, present whenever the block parsed.
    pub canonical: Option<String>,
    pub outcome: Outcome,
}

impl Assessment {
    fn parse_failure(message: impl Into<String>) -> Self {
        Self {
            canonical: None,
            outcome: Outcome::ParseFailure(message.into()),
        }
    }

    fn parsed(canonical: String, outcome: Outcome) -> Self {
        Self {
            canonical: Some(canonical),
            outcome,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.outcome == Outcome::Valid
    }
}

/// Finds the first hypothesis block for `task` in free-form sampler output.
///
/// Fence lines are ignored. `EDGES:` and `EXPR:` blocks are the rest of
/// their line; a `LAYERS:` block continues over following lines made only
/// of `0`, `1`, whitespace, `|` and `/`, blank lines included.
pub fn extract_block(task: TaskKind, raw: &str) -> Option<String> {
    let header = task.header();
    let lines: Vec<&str> = raw.lines().collect();
    let (start, line) = lines
        .iter()
        .enumerate()
        .find_map(|(i, l)| l.find(header).map(|pos| (i, &l[pos..])))?;
    let first = line.trim_end().trim_end_matches(['`', '*']).trim_end();
    if task != TaskKind::Voxel {
        return Some(first.to_string());
    }
    let mut block = vec![first.to_string()];
    for l in &lines[start + 1..] {
        let t = l.trim();
        if t.starts_with("```") {
            break;
        }
        if t.chars()
            .all(|c| matches!(c, '0' | '1' | '|' | '/') || c.is_whitespace())
        {
            block.push(t.to_string());
        } else {
            break;
        }
    }
    while block.last().is_some_and(|l| l.is_empty()) {
        block.pop();
    }
    Some(block.join("\n"))
}

fn bit(b: bool) -> u8 {
    u8::from(b)
}

impl Instance {
    pub fn task(&self) -> TaskKind {
        match self.body {
            TaskInstance::Causal(_) => TaskKind::Causal,
            TaskInstance::Voxel(_) => TaskKind::Voxel,
            TaskInstance::Bool(_) => TaskKind::Bool,
        }
    }

    pub fn id(&self) -> &str {
        &self.meta.id
    }

    /// |H_O|.
    pub fn admissible_size(&self) -> u64 {
        match &self.body {
            TaskInstance::Causal(c) => c.admissible.len() as u64,
            TaskInstance::Voxel(v) => v.count,
            TaskInstance::Bool(b) => b.admissible.len() as u64,
        }
    }

    /// Admissible set for scoring. Voxel sets are counted; membership of a
    /// valid stack follows from the closed-form count.
    pub fn admissible_set(&self) -> AdmissibleSet {
        match &self.body {
            TaskInstance::Causal(c) => {
                AdmissibleSet::Enumerated(c.admissible.iter().map(canon_dag).collect())
            }
            TaskInstance::Voxel(v) => AdmissibleSet::Counted(v.count),
            TaskInstance::Bool(b) => {
                AdmissibleSet::Enumerated(b.admissible.iter().cloned().collect())
            }
        }
    }

    /// The `index`-th admissible hypothesis in canonical order (sorted
    /// canonical forms for graphs and expressions, enumeration order for
    /// voxel stacks).
    pub fn nth_admissible(&self, index: u64) -> Result<Hypothesis> {
        let size = self.admissible_size();
        if index >= size {
            return Err(Error::InvalidParameters(format!(
                "index {index} outside admissible set of size {size}"
            )));
        }
        let i = index as usize;
        Ok(match &self.body {
            TaskInstance::Causal(c) => Hypothesis::Dag(c.admissible[i].clone()),
            TaskInstance::Voxel(v) => {
                Hypothesis::Stack(voxel::nth_admissible(&v.projection, v.k, index)?)
            }
            TaskInstance::Bool(b) => Hypothesis::Expr(b.witnesses[i].clone()),
        })
    }

    /// Uniform draw from the admissible set.
    pub fn random_admissible(&self, rng: &mut dyn RngCore) -> Result<Hypothesis> {
        if let TaskInstance::Voxel(v) = &self.body {
            return Ok(Hypothesis::Stack(voxel::random_admissible(
                &v.projection,
                v.k,
                rng,
            )));
        }
        let size = self.admissible_size();
        if size == 0 {
            return Err(Error::InvalidParameters("empty admissible set".into()));
        }
        self.nth_admissible(rng.random_range(0..size))
    }

    /// Extracts, parses, checks constraints and validates one raw emission.
    pub fn assess(&self, raw: &str) -> Assessment {
        let Some(block) = extract_block(self.task(), raw) else {
            return Assessment::parse_failure(format!("no `{}` block", self.task().header()));
        };
        match &self.body {
            TaskInstance::Causal(c) => {
                let edges = match parse_edges(&block) {
                    Ok(e) => e,
                    Err(e) => return Assessment::parse_failure(e.to_string()),
                };
                let canonical = canon_edges(edges.iter().copied());
                match Dag::new(c.n, edges) {
                    Err(e) => {
                        Assessment::parsed(canonical, Outcome::ConstraintViolation(e.to_string()))
                    }
                    Ok(dag) => {
                        let ok = causal::validate_dag(&dag, &c.observations).unwrap_or(false);
                        Assessment::parsed(
                            canonical,
                            if ok { Outcome::Valid } else { Outcome::Invalid },
                        )
                    }
                }
            }
            TaskInstance::Voxel(v) => {
                let stack = match parse_stack(&block) {
                    Ok(s) => s,
                    Err(e) => return Assessment::parse_failure(e.to_string()),
                };
                if stack.m() != v.projection.m() {
                    return Assessment::parsed(
                        canon_stack(&stack),
                        Outcome::ConstraintViolation(format!(
                            "grid side {} differs from {}",
                            stack.m(),
                            v.projection.m()
                        )),
                    );
                }
                let Some(padded) = stack.padded_to(v.k) else {
                    return Assessment::parsed(
                        canon_stack(&stack),
                        Outcome::ConstraintViolation(format!(
                            "{} layers exceed the height budget {}",
                            stack.k(),
                            v.k
                        )),
                    );
                };
                let canonical = canon_stack(&padded);
                if !voxel::check_gravity(&padded) {
                    return Assessment::parsed(
                        canonical,
                        Outcome::ConstraintViolation("floating voxel".into()),
                    );
                }
                let ok = voxel::project(&padded) == v.projection;
                Assessment::parsed(
                    canonical,
                    if ok { Outcome::Valid } else { Outcome::Invalid },
                )
            }
            TaskInstance::Bool(b) => {
                let expr = match parse_expr_line(&block) {
                    Ok(e) => e,
                    Err(e) => return Assessment::parse_failure(e.to_string()),
                };
                let canonical = canon_expr(&expr).to_string();
                match boolexpr::validate_expr(&expr, &b.observations, &b.space) {
                    Err(v) => Assessment::parsed(canonical, Outcome::ConstraintViolation(v.0)),
                    Ok(true) => Assessment::parsed(canonical, Outcome::Valid),
                    Ok(false) => Assessment::parsed(canonical, Outcome::Invalid),
                }
            }
        }
    }

    /// Observations as prompt text.
    pub fn observations_text(&self) -> String {
        match &self.body {
            TaskInstance::Causal(c) => {
                let nodes: Vec<String> = (0..c.n).map(|i| causal::label(i).to_string()).collect();
                let mut out = format!("Nodes: {}\n", nodes.join(", "));
                for o in &c.observations {
                    let hit: Vec<String> = o
                        .effect()
                        .iter()
                        .enumerate()
                        .filter(|(_, &on)| on)
                        .map(|(j, _)| causal::label(j).to_string())
                        .collect();
                    let affected = if hit.is_empty() {
                        "none".to_string()
                    } else {
                        hit.join(", ")
                    };
                    out.push_str(&format!(
                        "Perturbing {} affects: {}\n",
                        causal::label(o.source()),
                        affected
                    ));
                }
                out.trim_end().to_string()
            }
            TaskInstance::Voxel(v) => {
                let m = v.projection.m();
                let mut out = format!(
                    "Grid: {m}x{m}, height budget K={}\nTop-down projection (1 = column holds at least one voxel):",
                    v.k
                );
                for row in v.projection.rows() {
                    out.push('\n');
                    out.extend(row.iter().map(|&c| if c { '1' } else { '0' }));
                }
                out
            }
            TaskInstance::Bool(b) => {
                let ops: Vec<&str> = b.space.ops.iter().map(|o| o.name()).collect();
                let constants = if b.space.allow_constants {
                    "allowed"
                } else {
                    "not allowed"
                };
                let mut out = format!(
                    "Operators: {}; maximum depth {}; constants 0/1 {}\nObservations (maternal x, paternal y -> phenotype):",
                    ops.join(", "),
                    b.space.depth,
                    constants
                );
                for o in &b.observations {
                    out.push_str(&format!(
                        "\nx={}, y={} -> {}",
                        bit(o.x),
                        bit(o.y),
                        bit(o.pi)
                    ));
                }
                out
            }
        }
    }

    /// Output-format instructions for samplers.
    pub fn schema_text(&self) -> String {
        match &self.body {
            TaskInstance::Causal(_) => "Reply with one line of the form `EDGES: A>B, B>C` listing every \
                directed edge of a single DAG over the given nodes. Use `EDGES: none` for a graph \
                without edges."
                .to_string(),
            TaskInstance::Voxel(v) => format!(
                "Reply with `LAYERS:` followed by {k} blocks of {m} rows, each row {m} characters of \
                 0/1. List the bottom layer first and separate blocks with a blank line.",
                k = v.k,
                m = v.projection.m()
            ),
            TaskInstance::Bool(_) => "Reply with one line of the form `EXPR: x AND NOT y` using x, y, \
                the allowed operators (NOT, AND, OR) and parentheses."
                .to_string(),
        }
    }
}

/// Generator settings for one difficulty tier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum LevelParams {
    Causal { n: usize, m: usize },
    Voxel { m: usize, k: usize, occupied: usize },
    Bool { difficulty: BoolDifficulty },
}

/// Grid side and height budget for the voxel presets.
pub const VOXEL_PRESET_SIDE: usize = 3;
pub const VOXEL_PRESET_HEIGHT: usize = 3;

impl LevelParams {
    pub fn task(&self) -> TaskKind {
        match self {
            LevelParams::Causal { .. } => TaskKind::Causal,
            LevelParams::Voxel { .. } => TaskKind::Voxel,
            LevelParams::Bool { .. } => TaskKind::Bool,
        }
    }

    /// The three standard tiers of a task.
    pub fn presets(task: TaskKind) -> Vec<Self> {
        ["1", "2", "3"]
            .iter()
            .map(|l| Self::preset(task, l).expect("built-in preset"))
            .collect()
    }

    /// Resolves a difficulty name: a tier index `1..=3`, or `nodes=N`
    /// (causal), `tp=N` (voxel), `basic|extended|full` (Boolean).
    pub fn preset(task: TaskKind, level: &str) -> Result<Self> {
        let bad = || Error::InvalidParameters(format!("unknown {task} difficulty `{level}`"));
        let tier = |s: &str| s.parse::<usize>().ok().filter(|t| (1..=3).contains(t));
        match task {
            TaskKind::Causal => {
                let n = match (tier(level), level.strip_prefix("nodes=")) {
                    (Some(t), _) => t + 3,
                    (None, Some(n)) => n.parse().map_err(|_| bad())?,
                    _ => return Err(bad()),
                };
                Ok(LevelParams::Causal { n, m: n })
            }
            TaskKind::Voxel => {
                let occupied = match (tier(level), level.strip_prefix("tp=")) {
                    (Some(t), _) => t,
                    (None, Some(n)) => n.parse().map_err(|_| bad())?,
                    _ => return Err(bad()),
                };
                Ok(LevelParams::Voxel {
                    m: VOXEL_PRESET_SIDE,
                    k: VOXEL_PRESET_HEIGHT,
                    occupied,
                })
            }
            TaskKind::Bool => Ok(LevelParams::Bool {
                difficulty: level.parse().map_err(|_| bad())?,
            }),
        }
    }

    pub fn difficulty(&self) -> Difficulty {
        match *self {
            LevelParams::Causal { n, m } => {
                let label = if m == n {
                    format!("nodes={n}")
                } else {
                    format!("nodes={n},m={m}")
                };
                Difficulty::new(n.saturating_sub(3) as u32, label)
            }
            LevelParams::Voxel { m, k, occupied } => {
                let label = if m == VOXEL_PRESET_SIDE && k == VOXEL_PRESET_HEIGHT {
                    format!("tp={occupied}")
                } else {
                    format!("tp={occupied},m={m},k={k}")
                };
                Difficulty::new(occupied as u32, label)
            }
            LevelParams::Bool { difficulty } => {
                Difficulty::new(difficulty.level(), difficulty.name())
            }
        }
    }

    /// Instance `index` of this tier under base seed `base_seed`.
    pub fn generate(&self, base_seed: u64, index: usize) -> Result<Instance> {
        let difficulty = self.difficulty();
        let task = self.task();
        let seed = instance_seed(base_seed, task, &difficulty.label, index);
        let body = match *self {
            LevelParams::Causal { n, m } => {
                TaskInstance::Causal(causal::generate_causal_instance(n, m, seed)?)
            }
            LevelParams::Voxel { m, k, occupied } => {
                TaskInstance::Voxel(voxel::generate_voxel_instance(m, k, occupied, seed)?)
            }
            LevelParams::Bool { difficulty } => {
                TaskInstance::Bool(boolexpr::generate_bool_instance(difficulty, seed)?)
            }
        };
        Ok(Instance {
            meta: InstanceMeta {
                id: instance_id(task, &difficulty.label, index),
                difficulty,
                seed,
                config_digest: None,
            },
            body,
        })
    }
}

/// Named sub-seed for instance `index` of a tier.
pub fn instance_seed(base: u64, task: TaskKind, label: &str, index: usize) -> u64 {
    seed::derive(base, &format!("{task}/{label}/{index}"))
}

pub fn instance_id(task: TaskKind, label: &str, index: usize) -> String {
    let compact: String = label.chars().filter(|c| !matches!(c, '=' | ',')).collect();
    format!("{task}-{compact}-{index:03}")
}

// Instance file format.

#[derive(Serialize, Deserialize)]
struct CausalObservationFile {
    source: String,
    effect: BTreeMap<String, u8>,
}

#[derive(Serialize, Deserialize)]
struct BoolObservationFile {
    x: u8,
    y: u8,
    pi: u8,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
enum InstanceFile {
    Causal {
        id: String,
        difficulty: Difficulty,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config_digest: Option<String>,
        n: usize,
        observations: Vec<CausalObservationFile>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        latent: Option<String>,
        admissible: Vec<String>,
    },
    Voxel {
        id: String,
        difficulty: Difficulty,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config_digest: Option<String>,
        m: usize,
        k: usize,
        projection: Vec<Vec<u8>>,
        count: u64,
    },
    Bool {
        id: String,
        difficulty: Difficulty,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config_digest: Option<String>,
        ops: Vec<Op>,
        depth: usize,
        constants: bool,
        observations: Vec<BoolObservationFile>,
        count: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        admissible: Option<Vec<String>>,
    },
}

fn to_bit(v: u8, what: &str) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(Error::InvalidObservation(format!(
            "{what} must be 0 or 1, got {v}"
        ))),
    }
}

fn parse_label(s: &str, n: usize) -> Result<usize> {
    let mut chars = s.chars();
    match (chars.next().and_then(causal::label_index), chars.next()) {
        (Some(i), None) if i < n => Ok(i),
        _ => Err(Error::InvalidObservation(format!(
            "unknown node label `{s}`"
        ))),
    }
}

impl Instance {
    pub fn to_json(&self) -> Result<String> {
        let InstanceMeta {
            id,
            difficulty,
            seed,
            config_digest,
        } = self.meta.clone();
        let file = match &self.body {
            TaskInstance::Causal(c) => InstanceFile::Causal {
                id,
                difficulty,
                seed,
                config_digest,
                n: c.n,
                observations: c
                    .observations
                    .iter()
                    .map(|o| CausalObservationFile {
                        source: causal::label(o.source()).to_string(),
                        effect: o
                            .effect()
                            .iter()
                            .enumerate()
                            .map(|(j, &on)| (causal::label(j).to_string(), bit(on)))
                            .collect(),
                    })
                    .collect(),
                latent: c.latent.as_ref().map(canon_dag),
                admissible: c.admissible.iter().map(canon_dag).collect(),
            },
            TaskInstance::Voxel(v) => InstanceFile::Voxel {
                id,
                difficulty,
                seed,
                config_digest,
                m: v.projection.m(),
                k: v.k,
                projection: v
                    .projection
                    .rows()
                    .iter()
                    .map(|r| r.iter().map(|&c| bit(c)).collect())
                    .collect(),
                count: v.count,
            },
            TaskInstance::Bool(b) => InstanceFile::Bool {
                id,
                difficulty,
                seed,
                config_digest,
                ops: b.space.ops.iter().copied().collect(),
                depth: b.space.depth,
                constants: b.space.allow_constants,
                observations: b
                    .observations
                    .iter()
                    .map(|o| BoolObservationFile {
                        x: bit(o.x),
                        y: bit(o.y),
                        pi: bit(o.pi),
                    })
                    .collect(),
                count: b.admissible.len() as u64,
                admissible: (b.admissible.len() as u64 <= MATERIALIZE_CAP)
                    .then(|| b.admissible.clone()),
            },
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Loads an instance file. The admissible set is always re-derived from
    /// the observations; a stored set or count that disagrees is an error.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        let mismatch = |what: &str| {
            Error::InvalidObservation(format!("stored {what} disagrees with the observations"))
        };
        let (meta, body) = match file {
            InstanceFile::Causal {
                id,
                difficulty,
                seed,
                config_digest,
                n,
                observations,
                latent,
                admissible,
            } => {
                if n == 0 || n > causal::MAX_NODES {
                    return Err(Error::InvalidParameters(format!("bad node count {n}")));
                }
                let mut obs = Vec::with_capacity(observations.len());
                for o in observations {
                    let source = parse_label(&o.source, n)?;
                    let mut effect = vec![false; n];
                    let mut seen = BTreeSet::new();
                    for (name, v) in &o.effect {
                        let j = parse_label(name, n)?;
                        effect[j] = to_bit(*v, "effect entry")?;
                        seen.insert(j);
                    }
                    if seen.len() != n {
                        return Err(Error::InvalidObservation(format!(
                            "effect of {} must list all {n} nodes",
                            o.source
                        )));
                    }
                    obs.push(InterventionObservation::new(source, effect)?);
                }
                let latent = latent
                    .map(|s| Dag::new(n, causal::parse_canonical(&s)?))
                    .transpose()?;
                let inst = CausalInstance::from_observations(n, obs, latent)?;
                let derived: Vec<String> = inst.admissible.iter().map(canon_dag).collect();
                let stored: BTreeSet<&String> = admissible.iter().collect();
                if stored != derived.iter().collect::<BTreeSet<_>>() {
                    return Err(mismatch("admissible set"));
                }
                (
                    InstanceMeta {
                        id,
                        difficulty,
                        seed,
                        config_digest,
                    },
                    TaskInstance::Causal(inst),
                )
            }
            InstanceFile::Voxel {
                id,
                difficulty,
                seed,
                config_digest,
                m,
                k,
                projection,
                count,
            } => {
                let rows = projection
                    .iter()
                    .map(|r| r.iter().map(|&c| to_bit(c, "projection cell")).collect())
                    .collect::<Result<Vec<Vec<bool>>>>()?;
                let projection = Projection::new(rows)?;
                if projection.m() != m {
                    return Err(Error::DimensionMismatch {
                        expected: format!("{m}×{m} projection"),
                        actual: format!("{0}×{0}", projection.m()),
                    });
                }
                let inst = VoxelInstance::new(projection, k)?;
                if inst.count != count {
                    return Err(mismatch("count"));
                }
                (
                    InstanceMeta {
                        id,
                        difficulty,
                        seed,
                        config_digest,
                    },
                    TaskInstance::Voxel(inst),
                )
            }
            InstanceFile::Bool {
                id,
                difficulty,
                seed,
                config_digest,
                ops,
                depth,
                constants,
                observations,
                count,
                admissible,
            } => {
                let obs = observations
                    .iter()
                    .map(|o| {
                        Ok(PhenotypeObservation {
                            x: to_bit(o.x, "x")?,
                            y: to_bit(o.y, "y")?,
                            pi: to_bit(o.pi, "pi")?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let inst =
                    BoolInstance::from_observations(ExprSpace::new(ops, depth, constants), obs)?;
                if inst.admissible.len() as u64 != count {
                    return Err(mismatch("count"));
                }
                if let Some(stored) = admissible {
                    if stored != inst.admissible {
                        return Err(mismatch("admissible set"));
                    }
                }
                (
                    InstanceMeta {
                        id,
                        difficulty,
                        seed,
                        config_digest,
                    },
                    TaskInstance::Bool(inst),
                )
            }
        };
        Ok(Instance { meta, body })
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn causal_instance() -> Instance {
        LevelParams::Causal { n: 4, m: 4 }.generate(7, 0).unwrap()
    }

    #[test]
    fn extraction() {
        assert_eq!(
            extract_block(TaskKind::Causal, "Sure!\n```\nEDGES: A>B, B>C\n```\n").as_deref(),
            Some("EDGES: A>B, B>C")
        );
        assert_eq!(
            extract_block(TaskKind::Bool, "Answer: `EXPR: x AND y`").as_deref(),
            Some("EXPR: x AND y")
        );
        assert_eq!(extract_block(TaskKind::Bool, "x AND y"), None);
        let voxel = "Here:\n```\nLAYERS:\n10\n01\n\n10\n00\n```\nDone";
        assert_eq!(
            extract_block(TaskKind::Voxel, voxel).as_deref(),
            Some("LAYERS:\n10\n01\n\n10\n00")
        );
    }

    #[test]
    fn causal_assessment_categories() {
        let inst = causal_instance();
        let TaskInstance::Causal(c) = &inst.body else {
            unreachable!()
        };
        let valid = c.admissible[0].to_text();
        let a = inst.assess(&valid);
        assert_eq!(a.outcome, Outcome::Valid);
        assert_eq!(
            a.canonical.as_deref(),
            Some(canon_dag(&c.admissible[0]).as_str())
        );
        assert!(matches!(
            inst.assess("EDGES: A>>B").outcome,
            Outcome::ParseFailure(_)
        ));
        assert!(matches!(
            inst.assess("no edges here").outcome,
            Outcome::ParseFailure(_)
        ));
        assert!(matches!(
            inst.assess("EDGES: A>B, B>A").outcome,
            Outcome::ConstraintViolation(_)
        ));
        assert!(matches!(
            inst.assess("EDGES: A>Z").outcome,
            Outcome::ConstraintViolation(_)
        ));
        assert!(matches!(
            inst.assess("EDGES: A>A").outcome,
            Outcome::ConstraintViolation(_)
        ));
    }

    #[test]
    fn voxel_assessment_categories() {
        let inst = LevelParams::Voxel {
            m: 2,
            k: 2,
            occupied: 1,
        }
        .generate(1, 0)
        .unwrap();
        let h = inst.nth_admissible(0).unwrap();
        assert_eq!(inst.assess(&h.to_text()).outcome, Outcome::Valid);
        let TaskInstance::Voxel(v) = &inst.body else {
            unreachable!()
        };
        let (i, j) = v.projection.occupied()[0];
        // Single bottom layer is padded to the budget.
        let mut bottom = VoxelStack::empty(1, 2);
        bottom.set(0, i, j, true);
        let a = inst.assess(&bottom.to_text());
        assert_eq!(a.outcome, Outcome::Valid);
        assert_eq!(a.canonical, Some(h.canonical()));
        let mut floating = VoxelStack::empty(2, 2);
        floating.set(1, i, j, true);
        assert!(matches!(
            inst.assess(&floating.to_text()).outcome,
            Outcome::ConstraintViolation(_)
        ));
        assert_eq!(
            inst.assess(&VoxelStack::empty(2, 2).to_text()).outcome,
            Outcome::Invalid
        );
        assert!(matches!(
            inst.assess(&VoxelStack::empty(3, 2).to_text()).outcome,
            Outcome::ConstraintViolation(_)
        ));
        assert!(matches!(
            inst.assess(&VoxelStack::empty(1, 3).to_text()).outcome,
            Outcome::ConstraintViolation(_)
        ));
        assert!(matches!(
            inst.assess("LAYERS:\n1x").outcome,
            Outcome::ParseFailure(_)
        ));
    }

    #[test]
    fn bool_assessment_categories() {
        let inst = LevelParams::Bool {
            difficulty: BoolDifficulty::Basic,
        }
        .generate(0, 0)
        .unwrap();
        let h = inst.nth_admissible(0).unwrap();
        assert_eq!(inst.assess(&h.to_text()).outcome, Outcome::Valid);
        assert!(matches!(
            inst.assess("EXPR: NOT NOT NOT x").outcome,
            Outcome::ConstraintViolation(_)
        ));
        assert!(matches!(
            inst.assess("EXPR: x AND AND y").outcome,
            Outcome::ParseFailure(_)
        ));
    }

    #[test]
    fn instance_files_round_trip() {
        for task in TaskKind::ALL {
            for level in LevelParams::presets(task) {
                let inst = level.generate(11, 2).unwrap();
                let text = inst.to_json().unwrap();
                let back = Instance::from_json(&text).unwrap();
                assert_eq!(back, inst, "{task} {level:?}");
                assert_eq!(back.to_json().unwrap(), text);
            }
        }
    }

    #[test]
    fn instance_json_shape() {
        let inst = causal_instance();
        let v: serde_json::Value = serde_json::from_str(&inst.to_json().unwrap()).unwrap();
        assert_eq!(v["task"], "causal");
        assert_eq!(v["n"], 4);
        assert!(v["observations"][0]["effect"]["A"].is_u64());
        let voxel = LevelParams::preset(TaskKind::Voxel, "tp=3")
            .unwrap()
            .generate(1, 0)
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&voxel.to_json().unwrap()).unwrap();
        assert_eq!(v["count"], 27);
        assert_eq!(v["projection"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let inst = causal_instance();
        let mut v: serde_json::Value = serde_json::from_str(&inst.to_json().unwrap()).unwrap();
        v["admissible"] = serde_json::json!(["A>B"]);
        assert!(Instance::from_json(&v.to_string()).is_err());
        assert!(Instance::from_json("{\"task\":\"causal\"}").is_err());
        assert!(Instance::from_json("not json").is_err());
    }

    #[test]
    fn presets_and_levels() {
        let d: Vec<String> = LevelParams::presets(TaskKind::Causal)
            .iter()
            .map(|l| l.difficulty().label)
            .collect();
        assert_eq!(d, vec!["nodes=4", "nodes=5", "nodes=6"]);
        assert_eq!(
            LevelParams::preset(TaskKind::Voxel, "tp=3").unwrap(),
            LevelParams::Voxel {
                m: 3,
                k: 3,
                occupied: 3
            }
        );
        assert!(LevelParams::preset(TaskKind::Bool, "hard").is_err());
        assert!(LevelParams::preset(TaskKind::Causal, "7").is_err());
    }

    #[test]
    fn random_admissible_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for task in TaskKind::ALL {
            let inst = LevelParams::presets(task)[1].generate(3, 0).unwrap();
            for _ in 0..10 {
                let h = inst.random_admissible(&mut rng).unwrap();
                assert!(
                    inst.assess(&h.to_text()).is_valid(),
                    "{task} {} {:?}",
                    h.to_text(),
                    inst.assess(&h.to_text())
                );
            }
        }
    }
}
