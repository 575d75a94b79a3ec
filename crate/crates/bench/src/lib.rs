//! Shared fixtures for the benchmarks.

use hypospace_core::causal::InterventionObservation;
use hypospace_core::harness::{run_instance, RunOptions, SamplerConfig, TemplateSet};
use hypospace_core::{Instance, LevelParams, ProposalRecord, TaskKind};

/// Single-source observation on a chain over `n` nodes, the loosest
/// constraint set that still fixes a descendant set.
pub fn chain_root_observation(n: usize) -> Vec<InterventionObservation> {
    let targets: Vec<usize> = (1..n).collect();
    vec![InterventionObservation::from_targets(n, 0, &targets).expect("valid observation")]
}

pub fn preset(task: TaskKind, level: &str, seed: u64) -> Instance {
    LevelParams::preset(task, level)
        .expect("known preset")
        .generate(seed, 0)
        .expect("generation succeeds")
}

/// Records of a random-valid run with `n` proposals.
pub fn random_run(instance: &Instance, n: usize) -> Vec<ProposalRecord> {
    let opts = RunOptions {
        n_override: Some(n),
        deterministic: true,
        ..Default::default()
    };
    run_instance(
        instance,
        &SamplerConfig::random_valid(1),
        &opts,
        &TemplateSet::builtin(),
        None,
    )
    .expect("run succeeds")
    .records()
}
