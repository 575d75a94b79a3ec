use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prompt::SamplerContext;
use super::remote::{send_chat, RemoteConfig};
use crate::error::{Error, Result};
use crate::seed;
use crate::task::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Walks the admissible set in canonical order.
    Oracle,
    /// Uniform draws from the admissible set, with replacement.
    RandomValid,
    /// Replays a fixed list of emissions, cycling when exhausted.
    Scripted,
    /// Chat-completions endpoint.
    Remote,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Oracle => "oracle",
            SamplerKind::RandomValid => "random_valid",
            SamplerKind::Scripted => "scripted",
            SamplerKind::Remote => "remote",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(SamplerKind::Oracle),
            "random" | "random_valid" | "random-valid" => Ok(SamplerKind::RandomValid),
            "scripted" => Ok(SamplerKind::Scripted),
            "remote" | "llm" => Ok(SamplerKind::Remote),
            _ => Err(Error::Config(format!("unknown sampler `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Optional display name; defaults to the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteConfig>,
}

impl SamplerConfig {
    fn of(kind: SamplerKind) -> Self {
        Self {
            kind,
            name: None,
            seed: 0,
            script: Vec::new(),
            remote: None,
        }
    }

    pub fn oracle() -> Self {
        Self::of(SamplerKind::Oracle)
    }

    pub fn random_valid(seed: u64) -> Self {
        Self {
            seed,
            ..Self::of(SamplerKind::RandomValid)
        }
    }

    pub fn scripted(script: Vec<String>) -> Self {
        Self {
            script,
            ..Self::of(SamplerKind::Scripted)
        }
    }

    pub fn remote(config: RemoteConfig) -> Self {
        Self {
            remote: Some(config),
            ..Self::of(SamplerKind::Remote)
        }
    }

    /// Name used in logs, file names and report columns.
    pub fn label(&self) -> String {
        match (&self.name, self.kind) {
            (Some(n), _) => n.clone(),
            (None, SamplerKind::Remote) => match &self.remote {
                Some(r) if !r.model.is_empty() => r.model.clone(),
                _ => "remote".to_string(),
            },
            (None, k) => k.name().to_string(),
        }
    }

    /// Short stable digest of the configuration.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("sampler config serializes");
        seed::short_digest(text.as_bytes())
    }

    /// Sampler state for one run on `instance`.
    pub fn build<'a>(&'a self, instance: &'a Instance) -> Result<Box<dyn Sampler + 'a>> {
        Ok(match self.kind {
            SamplerKind::Oracle => Box::new(OracleSampler { instance }),
            SamplerKind::RandomValid => Box::new(RandomValidSampler {
                instance,
                rng: ChaCha8Rng::seed_from_u64(seed::derive(self.seed, instance.id())),
            }),
            SamplerKind::Scripted => {
                if self.script.is_empty() {
                    return Err(Error::Config(
                        "scripted sampler needs a non-empty script".into(),
                    ));
                }
                Box::new(ScriptedSampler {
                    script: &self.script,
                })
            }
            SamplerKind::Remote => Box::new(RemoteSampler {
                config: self.remote.as_ref().ok_or_else(|| {
                    Error::Config("remote sampler needs endpoint settings".into())
                })?,
            }),
        })
    }
}

/// One sampler emission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emission {
    pub text: String,
    pub tokens: Option<u64>,
    pub retries: u32,
}

impl Emission {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            tokens: None,
            retries: 0,
        }
    }
}

pub trait Sampler {
    fn propose(&mut self, ctx: &SamplerContext, prompt: &str) -> Result<Emission>;

    /// Whether `propose` reads the rendered prompt. Runs skip rendering for
    /// samplers that do not.
    fn uses_prompt(&self) -> bool {
        true
    }
}

struct OracleSampler<'a> {
    instance: &'a Instance,
}

impl Sampler for OracleSampler<'_> {
    fn uses_prompt(&self) -> bool {
        false
    }

    fn propose(&mut self, ctx: &SamplerContext, _prompt: &str) -> Result<Emission> {
        let index = ctx.attempt as u64 - 1;
        if index >= self.instance.admissible_size() {
            return Err(Error::Sampler(format!(
                "oracle exhausted after {} hypotheses",
                self.instance.admissible_size()
            )));
        }
        Ok(Emission::text(
            self.instance.nth_admissible(index)?.to_text(),
        ))
    }
}

struct RandomValidSampler<'a> {
    instance: &'a Instance,
    rng: ChaCha8Rng,
}

impl Sampler for RandomValidSampler<'_> {
    fn uses_prompt(&self) -> bool {
        false
    }

    fn propose(&mut self, _ctx: &SamplerContext, _prompt: &str) -> Result<Emission> {
        Ok(Emission::text(
            self.instance.random_admissible(&mut self.rng)?.to_text(),
        ))
    }
}

struct ScriptedSampler<'a> {
    script: &'a [String],
}

impl Sampler for ScriptedSampler<'_> {
    fn uses_prompt(&self) -> bool {
        false
    }

    fn propose(&mut self, ctx: &SamplerContext, _prompt: &str) -> Result<Emission> {
        let line = &self.script[(ctx.attempt - 1) % self.script.len()];
        Ok(Emission::text(line.clone()))
    }
}

struct RemoteSampler<'a> {
    config: &'a RemoteConfig,
}

impl Sampler for RemoteSampler<'_> {
    fn propose(&mut self, _ctx: &SamplerContext, prompt: &str) -> Result<Emission> {
        let reply = send_chat(self.config, prompt)?;
        Ok(Emission {
            text: reply.text,
            tokens: reply.usage.and_then(|u| u.total()),
            retries: reply.retries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{LevelParams, TaskKind};

    #[test]
    fn oracle_walks_admissible_set() {
        let inst = LevelParams::preset(TaskKind::Bool, "basic")
            .unwrap()
            .generate(0, 0)
            .unwrap();
        let cfg = SamplerConfig::oracle();
        let mut s = cfg.build(&inst).unwrap();
        let mut ctx = SamplerContext::new(&inst, "bool");
        for i in 0..inst.admissible_size() {
            let e = s.propose(&ctx, "").unwrap();
            assert_eq!(
                inst.assess(&e.text).canonical,
                Some(inst.nth_admissible(i).unwrap().canonical())
            );
            ctx.record(e.text);
        }
        assert!(s.propose(&ctx, "").is_err());
    }

    #[test]
    fn scripted_cycles() {
        let inst = LevelParams::preset(TaskKind::Bool, "basic")
            .unwrap()
            .generate(0, 0)
            .unwrap();
        let cfg = SamplerConfig::scripted(vec!["a".into(), "b".into()]);
        let mut s = cfg.build(&inst).unwrap();
        let mut ctx = SamplerContext::new(&inst, "bool");
        let mut seen = Vec::new();
        for _ in 0..3 {
            let e = s.propose(&ctx, "").unwrap();
            seen.push(e.text.clone());
            ctx.record(e.text);
        }
        assert_eq!(seen, vec!["a", "b", "a"]);
        assert!(SamplerConfig::scripted(vec![]).build(&inst).is_err());
    }

    #[test]
    fn random_valid_is_seeded() {
        let inst = LevelParams::preset(TaskKind::Voxel, "tp=3")
            .unwrap()
            .generate(0, 0)
            .unwrap();
        let draw = |seed| {
            let cfg = SamplerConfig::random_valid(seed);
            let mut s = cfg.build(&inst).unwrap();
            let ctx = SamplerContext::new(&inst, "voxel");
            (0..5)
                .map(|_| s.propose(&ctx, "").unwrap().text)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(1), draw(1));
        assert_ne!(draw(1), draw(2));
    }

    #[test]
    fn labels_and_digests() {
        assert_eq!(SamplerConfig::oracle().label(), "oracle");
        assert_eq!(
            "random".parse::<SamplerKind>().unwrap(),
            SamplerKind::RandomValid
        );
        assert_ne!(
            SamplerConfig::random_valid(1).digest(),
            SamplerConfig::random_valid(2).digest()
        );
    }
}
