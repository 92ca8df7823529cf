//! Infer TOD-Flow graphs (per-act can / should / should-not conditions) from
//! act-annotated dialogues, and use them to filter, extend and rank the act
//! predictions of any base dialogue policy.
//!
//! Pipeline: [`ingest`] trajectories into `(completion, action)` examples,
//! [`learn`] one DNF condition per act, store them in a [`graph`], and
//! [`condition`] provider candidates on it. [`synth`] and [`eval`] provide
//! ground-truth domains and metrics.

pub mod condition;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod learn;
pub mod providers;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use graph::TodFlowGraph;
pub use learn::dnf::{Clause, DnfCondition, Literal};
pub use learn::{infer_graph, GraphMethod, LearnConfig};
pub use types::{ActVocabulary, ActionSet, CompletionVector, GraphExample, Speaker, Trajectory, TurnRecord};
