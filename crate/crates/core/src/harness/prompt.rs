use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::task::{Instance, TaskKind};

const CAUSAL: &str = include_str!("../../templates/causal.txt");
const VOXEL: &str = include_str!("../../templates/voxel.txt");
const BOOL: &str = include_str!("../../templates/bool.txt");

/// Prompt templates by id. Placeholders are `{{observations}}`,
/// `{{history}}` and `{{schema}}`.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    /// One template per task, keyed by task name.
    pub fn builtin() -> Self {
        let templates = [
            (TaskKind::Causal, CAUSAL),
            (TaskKind::Voxel, VOXEL),
            (TaskKind::Bool, BOOL),
        ]
        .into_iter()
        .map(|(t, s)| (t.name().to_string(), s.to_string()))
        .collect();
        Self { templates }
    }

    pub fn insert(&mut self, id: impl Into<String>, text: impl Into<String>) {
        self.templates.insert(id.into(), text.into());
    }

    pub fn load_file(&mut self, id: impl Into<String>, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.insert(id, text);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&str> {
        self.templates
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownTemplate(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

/// What a sampler sees before proposing: public observations, the output
/// schema and its own earlier emissions. The admissible set is never here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplerContext {
    pub task: TaskKind,
    pub instance_id: String,
    pub observations: String,
    pub schema: String,
    pub template_id: String,
    /// Earlier emissions, oldest first.
    pub history: Vec<String>,
    /// 1-based index of the proposal about to be made.
    pub attempt: usize,
}

impl SamplerContext {
    pub fn new(instance: &Instance, template_id: impl Into<String>) -> Self {
        Self {
            task: instance.task(),
            instance_id: instance.id().to_string(),
            observations: instance.observations_text(),
            schema: instance.schema_text(),
            template_id: template_id.into(),
            history: Vec::new(),
            attempt: 1,
        }
    }

    pub fn record(&mut self, emission: impl Into<String>) {
        self.history.push(emission.into());
        self.attempt += 1;
    }
}

fn render_history(history: &[String]) -> String {
    if history.is_empty() {
        return "(none yet)".to_string();
    }
    history
        .iter()
        .enumerate()
        .map(|(i, h)| format!("Proposal {}:\n{}", i + 1, h.trim_end()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn render_prompt(ctx: &SamplerContext, templates: &TemplateSet) -> Result<String> {
    let template = templates.get(&ctx.template_id)?;
    Ok(template
        .replace("{{observations}}", &ctx.observations)
        .replace("{{schema}}", &ctx.schema)
        .replace("{{history}}", &render_history(&ctx.history)))
}
