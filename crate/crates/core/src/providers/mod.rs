//! Sources of ranked candidate predictions for one turn.

pub mod external;
pub mod oracle;
pub mod protocol;
pub mod replay;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::condition::{Candidate, ResponseCandidate};
use crate::types::{ActionSet, CompletionVector, TurnRecord};

pub use external::ExternalProvider;
pub use oracle::{NoisyOracleConfig, NoisyOracleProvider, RankOrder};
pub use replay::ReplayProvider;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("no stored candidates for trajectory `{trajectory}` turn {turn}")]
    MissingCandidates { trajectory: String, turn: usize },

    #[error("provider process failed: {message}{}", fmt_tail(.stderr_tail))]
    Spawn { message: String, stderr_tail: String },

    #[error("provider did not reply within {0:?}")]
    Timeout(Duration),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("provider reported an error: {0}")]
    Remote(String),

    #[error("invalid provider input: {0}")]
    Invalid(String),
}

fn fmt_tail(tail: &str) -> String {
    if tail.is_empty() {
        String::new()
    } else {
        format!("\nstderr tail:\n{tail}")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    #[default]
    Acts,
    Responses,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProviderRequest {
    pub domain: String,
    /// Key used by replay and oracle providers; not sent over the wire.
    pub trajectory_id: String,
    pub turn_index: usize,
    pub history: Vec<TurnRecord>,
    pub completion: CompletionVector,
    pub k: usize,
    pub mode: ProviderMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderCandidate {
    pub acts: ActionSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Candidates in preference order; position is the provider rank.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProviderReply {
    pub candidates: Vec<ProviderCandidate>,
}

impl ProviderReply {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn to_candidates(&self) -> Vec<Candidate> {
        self.candidates
            .iter()
            .enumerate()
            .map(|(rank, c)| Candidate {
                acts: c.acts.clone(),
                provider_rank: rank,
                provider_score: c.score,
            })
            .collect()
    }

    pub fn to_responses(&self) -> Vec<ResponseCandidate> {
        self.candidates
            .iter()
            .enumerate()
            .map(|(rank, c)| ResponseCandidate {
                text: c.text.clone().unwrap_or_default(),
                acts: c.acts.clone(),
                provider_rank: rank,
            })
            .collect()
    }
}

pub trait CandidateProvider: Send {
    /// Up to `request.k` candidates, best first.
    fn candidates(&mut self, request: &ProviderRequest) -> Result<ProviderReply, ProviderError>;
}

fn check_k(request: &ProviderRequest) -> Result<(), ProviderError> {
    if request.k == 0 {
        return Err(ProviderError::Invalid("k must be at least 1".into()));
    }
    Ok(())
}
