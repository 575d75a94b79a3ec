use std::path::{Path, PathBuf};

use hypospace_core::harness::{RunOptions, SamplerConfig, SuitePlan, DEFAULT_N_CAP};
use hypospace_core::{LevelParams, TaskKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

fn default_count() -> usize {
    3
}

fn default_n_cap() -> usize {
    DEFAULT_N_CAP
}

fn default_sampler() -> SamplerConfig {
    SamplerConfig::oracle()
}

/// Everything needed to regenerate a suite and rerun it. Mirrors the
/// command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub task: TaskKind,
    /// Difficulty names; empty means the three standard tiers.
    #[serde(default)]
    pub difficulty: Vec<String>,
    /// Instances per difficulty.
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerConfig,
    #[serde(default = "default_n_cap")]
    pub n_cap: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Causal node count; replaces the difficulty list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    /// Causal intervention count; defaults to the node count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interventions: Option<usize>,
    /// Voxel occupied-column count; replaces the difficulty list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tp: Option<usize>,
    /// Voxel grid side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    /// Voxel height budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
}

impl SuiteConfig {
    pub fn new(task: TaskKind) -> Self {
        Self {
            task,
            difficulty: Vec::new(),
            count: default_count(),
            seed: 0,
            sampler: default_sampler(),
            n_cap: default_n_cap(),
            n: None,
            deterministic: false,
            out: None,
            nodes: None,
            interventions: None,
            tp: None,
            grid: None,
            height: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 over the config without its output directory, first 16 hex
    /// characters.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Difficulty tiers after applying generator overrides.
    pub fn levels(&self) -> Result<Vec<LevelParams>, CliError> {
        let mut levels = match (self.task, self.nodes, self.tp) {
            (TaskKind::Causal, Some(n), _) => vec![LevelParams::Causal { n, m: n }],
            (TaskKind::Voxel, _, Some(occupied)) => vec![LevelParams::Voxel {
                m: hypospace_core::task::VOXEL_PRESET_SIDE,
                k: hypospace_core::task::VOXEL_PRESET_HEIGHT,
                occupied,
            }],
            _ if self.difficulty.is_empty() => LevelParams::presets(self.task),
            _ => self
                .difficulty
                .iter()
                .map(|d| LevelParams::preset(self.task, d))
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Usage(e.to_string()))?,
        };
        for level in &mut levels {
            match level {
                LevelParams::Causal { n, m } => {
                    *m = self.interventions.unwrap_or(*n);
                    if *m == 0 || *m > *n {
                        return Err(CliError::Usage(format!(
                            "interventions must be between 1 and the node count {n}"
                        )));
                    }
                }
                LevelParams::Voxel { m, k, occupied } => {
                    *m = self.grid.unwrap_or(*m);
                    *k = self.height.unwrap_or(*k);
                    if *m == 0 || *k == 0 || *occupied > *m * *m {
                        return Err(CliError::Usage(format!(
                            "voxel settings need a positive grid and height and at most {} occupied columns",
                            *m * *m
                        )));
                    }
                }
                LevelParams::Bool { .. } => {}
            }
        }
        Ok(levels)
    }

    pub fn plan(&self) -> Result<SuitePlan, CliError> {
        if self.count == 0 {
            return Err(CliError::Usage("count must be at least 1".into()));
        }
        Ok(SuitePlan {
            levels: self.levels()?,
            per_level: self.count,
            seed: self.seed,
        })
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            n_override: self.n,
            n_cap: self.n_cap,
            deterministic: self.deterministic,
            template_id: None,
            config_digest: Some(self.digest()),
            suite_seed: Some(self.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_digest() {
        let mut c = SuiteConfig::new(TaskKind::Voxel);
        c.tp = Some(3);
        let back: SuiteConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let mut moved = c.clone();
        moved.out = Some("elsewhere".into());
        assert_eq!(moved.digest(), c.digest());
        moved.seed = 1;
        assert_ne!(moved.digest(), c.digest());
    }

    #[test]
    fn level_overrides() {
        let mut c = SuiteConfig::new(TaskKind::Causal);
        c.nodes = Some(4);
        c.interventions = Some(2);
        assert_eq!(
            c.levels().unwrap(),
            vec![LevelParams::Causal { n: 4, m: 2 }]
        );
        c.interventions = Some(5);
        assert!(c.levels().is_err());
        let mut b = SuiteConfig::new(TaskKind::Bool);
        b.difficulty = vec!["hard".into()];
        assert!(matches!(b.levels(), Err(CliError::Usage(_))));
        assert!(serde_json::from_str::<SuiteConfig>(r#"{"task":"bool","bogus":1}"#).is_err());
    }
}
