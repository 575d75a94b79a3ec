//! Finite hypothesis-space tasks with exact enumeration, deterministic
//! validators and canonicalizers, plus the scoring engine that treats a text
//! emitter as a sampler over the admissible set.
//!
//! The three task domains live in [`causal`], [`voxel`] and [`boolexpr`].
//! [`task`] ties them together behind a single [`task::Instance`] type,
//! [`metrics`] scores proposal runs and [`harness`] drives samplers.

pub mod boolexpr;
pub mod causal;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod seed;
pub mod task;
pub mod voxel;

pub use error::{Error, ParseError, Result};
pub use metrics::{AdmissibleSet, Category, MetricsSummary, ProposalRecord};
pub use task::{Assessment, Difficulty, Hypothesis, Instance, LevelParams, Outcome, TaskKind};
