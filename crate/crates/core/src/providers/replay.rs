//! Stored candidates keyed by `(trajectory, turn)`.
//!
//! File format: JSONL, one `{"traj": str, "turn": int, "candidates": [...]}`
//! per line, candidates in rank order.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::protocol::{resolve_candidates, WireCandidate};
use super::{check_k, CandidateProvider, ProviderError, ProviderReply, ProviderRequest};
use crate::error::{Error, Result};
use crate::types::ActVocabulary;

#[derive(Deserialize)]
struct ReplayLine {
    traj: String,
    turn: usize,
    candidates: Vec<WireCandidate>,
}

#[derive(Clone, Debug, Default)]
pub struct ReplayProvider {
    stored: HashMap<(String, usize), ProviderReply>,
}

impl ReplayProvider {
    pub fn load(path: &Path, vocab: &ActVocabulary) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?, vocab)
    }

    pub fn parse(text: &str, vocab: &ActVocabulary) -> Result<Self> {
        let mut stored = HashMap::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ReplayLine = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: ln + 1,
                message: e.to_string(),
            })?;
            let reply = ProviderReply {
                candidates: resolve_candidates(rec.candidates, vocab),
            };
            stored.insert((rec.traj, rec.turn), reply);
        }
        Ok(Self { stored })
    }

    pub fn insert(&mut self, trajectory: impl Into<String>, turn: usize, reply: ProviderReply) {
        self.stored.insert((trajectory.into(), turn), reply);
    }

    pub fn len(&self) -> usize {
        self.stored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stored.is_empty()
    }
}

impl CandidateProvider for ReplayProvider {
    fn candidates(&mut self, request: &ProviderRequest) -> Result<ProviderReply, ProviderError> {
        check_k(request)?;
        let key = (request.trajectory_id.clone(), request.turn_index);
        let stored = self.stored.get(&key).ok_or_else(|| ProviderError::MissingCandidates {
            trajectory: key.0.clone(),
            turn: key.1,
        })?;
        Ok(ProviderReply {
            candidates: stored.candidates.iter().take(request.k).cloned().collect(),
        })
    }
}
