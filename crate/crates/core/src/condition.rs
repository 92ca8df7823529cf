//! Graph-conditioned prediction.
//!
//! A candidate act set is first extended with every act whose should
//! condition fires, then intersected with the acts whose can/should-not
//! condition holds. The order matters: an act required by a should condition
//! but not allowed is added and then removed again, and both events are kept
//! in the audit.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::TodFlowGraph;
use crate::learn::dnf::Clause;
use crate::types::{ActionSet, CompletionVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub acts: ActionSet,
    pub provider_rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider_score: Option<f64>,
}

impl Candidate {
    pub fn new(acts: ActionSet, provider_rank: usize) -> Self {
        Self {
            acts,
            provider_rank,
            provider_score: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionedCandidate {
    pub original: Candidate,
    pub final_acts: ActionSet,
    /// Acts brought in by a should condition.
    pub added: ActionSet,
    /// Acts dropped because their can/should-not condition fails.
    pub removed: ActionSet,
    pub compliance_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RankingStrategy {
    Greedy,
    Compliance,
    Majority,
    Violation,
    Uniform { seed: u64 },
}

impl RankingStrategy {
    pub const NAMES: [&'static str; 5] = ["greedy", "compliance", "majority", "violation", "uniform"];

    pub fn name(&self) -> &'static str {
        match self {
            RankingStrategy::Greedy => "greedy",
            RankingStrategy::Compliance => "compliance",
            RankingStrategy::Majority => "majority",
            RankingStrategy::Violation => "violation",
            RankingStrategy::Uniform { .. } => "uniform",
        }
    }

    pub fn parse(name: &str, seed: u64) -> Result<Self> {
        Ok(match name {
            "greedy" => RankingStrategy::Greedy,
            "compliance" => RankingStrategy::Compliance,
            "majority" => RankingStrategy::Majority,
            "violation" => RankingStrategy::Violation,
            "uniform" => RankingStrategy::Uniform { seed },
            other => return Err(Error::Config(format!("unknown ranking strategy `{other}`"))),
        })
    }

    /// Same strategy with the uniform seed mixed with a per-turn key, so
    /// turns do not all pick the same position.
    pub fn for_turn(self, key: u64) -> Self {
        match self {
            RankingStrategy::Uniform { seed } => RankingStrategy::Uniform {
                seed: seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            },
            other => other,
        }
    }
}

impl FromStr for RankingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseCandidate {
    pub text: String,
    pub acts: ActionSet,
    pub provider_rank: usize,
}

fn check_acts(graph: &TodFlowGraph, acts: &ActionSet) -> Result<()> {
    match acts.max_index() {
        Some(max) if max >= graph.n_acts() => Err(Error::vocab(format!(
            "act index {max} out of range for {} acts",
            graph.n_acts()
        ))),
        _ => Ok(()),
    }
}

/// Stable per-turn key, used to give the uniform strategy an independent
/// draw at every turn.
pub fn turn_key(trajectory: &str, turn: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(trajectory.as_bytes());
    h.update([0]);
    h.update((turn as u64).to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("32-byte digest"))
}

pub fn condition_candidate(graph: &TodFlowGraph, c: &CompletionVector, cand: &Candidate) -> Result<ConditionedCandidate> {
    condition_candidate_scoped(graph, c, cand, None)
}

/// As `condition_candidate`, but should conditions may only add acts inside
/// `scope` (e.g. the acts of the speaker being predicted).
pub fn condition_candidate_scoped(
    graph: &TodFlowGraph,
    c: &CompletionVector,
    cand: &Candidate,
    scope: Option<&ActionSet>,
) -> Result<ConditionedCandidate> {
    check_acts(graph, &cand.acts)?;
    let mut should = graph.should_acts(c)?;
    if let Some(scope) = scope {
        should = should.intersection(scope);
    }
    let allowed = graph.allowed_acts(c)?;
    let with_should = cand.acts.union(&should);
    let final_acts = with_should.intersection(&allowed);
    Ok(ConditionedCandidate {
        original: cand.clone(),
        added: should.difference(&cand.acts),
        removed: with_should.difference(&allowed),
        compliance_size: final_acts.len(),
        final_acts,
    })
}

/// Why an act was added: the should clause that fired.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AddedAct {
    pub act: usize,
    pub clause: Clause,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionAudit {
    pub strategy: RankingStrategy,
    pub chosen_rank: usize,
    /// `None` for greedy, which does not condition.
    pub conditioned: Option<ConditionedCandidate>,
    pub added: Vec<AddedAct>,
    pub removed: ActionSet,
}

fn order_by_rank(candidates: &[Candidate]) -> Vec<&Candidate> {
    let mut v: Vec<&Candidate> = candidates.iter().collect();
    v.sort_by_key(|c| c.provider_rank);
    v
}

pub fn rank_and_select(
    graph: &TodFlowGraph,
    c: &CompletionVector,
    candidates: &[Candidate],
    strategy: RankingStrategy,
) -> Result<(ActionSet, SelectionAudit)> {
    rank_and_select_scoped(graph, c, candidates, strategy, None)
}

pub fn rank_and_select_scoped(
    graph: &TodFlowGraph,
    c: &CompletionVector,
    candidates: &[Candidate],
    strategy: RankingStrategy,
    scope: Option<&ActionSet>,
) -> Result<(ActionSet, SelectionAudit)> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let ordered = order_by_rank(candidates);
    if strategy == RankingStrategy::Greedy {
        let top = ordered[0];
        check_acts(graph, &top.acts)?;
        let audit = SelectionAudit {
            strategy,
            chosen_rank: top.provider_rank,
            conditioned: None,
            added: Vec::new(),
            removed: ActionSet::new(),
        };
        return Ok((top.acts.clone(), audit));
    }

    let conditioned = ordered
        .iter()
        .map(|cand| condition_candidate_scoped(graph, c, cand, scope))
        .collect::<Result<Vec<_>>>()?;

    // `min_by_key` / `max_by_key` pick the last extremum; scan explicitly so
    // the lowest rank wins ties
    let argbest = |key: &dyn Fn(&ConditionedCandidate) -> i64| -> usize {
        let mut best = 0;
        for i in 1..conditioned.len() {
            if key(&conditioned[i]) > key(&conditioned[best]) {
                best = i;
            }
        }
        best
    };
    let chosen = match strategy {
        RankingStrategy::Greedy => unreachable!(),
        RankingStrategy::Compliance => argbest(&|cc| cc.compliance_size as i64),
        RankingStrategy::Violation => argbest(&|cc| -((cc.added.len() + cc.removed.len()) as i64)),
        RankingStrategy::Majority => {
            let mut counts: BTreeMap<&ActionSet, (usize, usize)> = BTreeMap::new();
            for (i, cc) in conditioned.iter().enumerate() {
                counts.entry(&cc.final_acts).or_insert((0, i)).0 += 1;
            }
            let mut best: Option<(usize, usize)> = None;
            for &(count, first) in counts.values() {
                if best.is_none_or(|(bc, bf)| count > bc || (count == bc && first < bf)) {
                    best = Some((count, first));
                }
            }
            best.expect("non-empty").1
        }
        RankingStrategy::Uniform { seed } => ChaCha8Rng::seed_from_u64(seed).random_range(0..conditioned.len()),
    };
    let picked = conditioned.into_iter().nth(chosen).expect("index in range");
    let added = picked
        .added
        .iter()
        .map(|act| AddedAct {
            act,
            clause: graph
                .entry(act)
                .and_then(|e| e.shd.firing_clause(c))
                .cloned()
                .unwrap_or_default(),
        })
        .collect();
    let audit = SelectionAudit {
        strategy,
        chosen_rank: picked.original.provider_rank,
        added,
        removed: picked.removed.clone(),
        conditioned: Some(picked.clone()),
    };
    Ok((picked.final_acts, audit))
}

/// `(|acts failing can/should-not| + |fired should acts missing|) /
/// (|acts| + |fired should acts|)`, with `0/0 = 0`.
pub fn violation_rate(graph: &TodFlowGraph, c: &CompletionVector, resp: &ResponseCandidate) -> Result<f64> {
    check_acts(graph, &resp.acts)?;
    let allowed = graph.allowed_acts(c)?;
    let should = graph.should_acts(c)?;
    let can_violations = resp.acts.difference(&allowed).len();
    let missed = should.difference(&resp.acts).len();
    let denom = resp.acts.len() + should.len();
    Ok(if denom == 0 {
        0.0
    } else {
        (can_violations + missed) as f64 / denom as f64
    })
}

/// The response with the lowest violation rate; ties go to the lowest
/// provider rank. Returns the chosen response and its rate.
pub fn select_response(
    graph: &TodFlowGraph,
    c: &CompletionVector,
    responses: &[ResponseCandidate],
) -> Result<(ResponseCandidate, f64)> {
    let mut best: Option<(&ResponseCandidate, f64)> = None;
    for resp in responses {
        let rate = violation_rate(graph, c, resp)?;
        let better = match best {
            None => true,
            Some((b, br)) => rate < br || (rate == br && resp.provider_rank < b.provider_rank),
        };
        if better {
            best = Some((resp, rate));
        }
    }
    best.map(|(r, rate)| (r.clone(), rate)).ok_or(Error::NoCandidates)
}
