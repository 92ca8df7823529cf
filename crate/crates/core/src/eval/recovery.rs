//! Truth-table comparison of an inferred graph against a known one.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TodFlowGraph;
use crate::learn::dnf::{DnfCondition, Literal};
use crate::synth::{role_of, Reachability, REACHABILITY_LIMIT};
use crate::types::{ActionSet, Speaker};

const SAMPLE_SIZE: usize = 100_000;
const SAMPLE_SEED: u64 = 0x5eed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionRecovery {
    /// Equal on every reachable completion.
    pub equivalent_reachable: bool,
    /// Equal on every completion (or every sampled one).
    pub equivalent_full: bool,
    /// Literals of the truth absent from the inferred condition.
    pub missing: Vec<Literal>,
    /// Literals of the inferred condition absent from the truth.
    pub redundant: Vec<Literal>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActRecovery {
    pub act: usize,
    pub label: String,
    pub can_shdnt: ConditionRecovery,
    pub shd: ConditionRecovery,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub acts: Vec<ActRecovery>,
    pub can_shdnt_rate: f64,
    pub can_shdnt_rate_full: f64,
    pub shd_rate: f64,
    pub shd_rate_full: f64,
    /// Truth tables were sampled rather than enumerated.
    pub sampled: bool,
}

impl RecoveryReport {
    pub fn act(&self, label: &str) -> Option<&ActRecovery> {
        self.acts.iter().find(|a| a.label == label)
    }
}

fn literal_diff(inferred: &DnfCondition, truth: &DnfCondition) -> (Vec<Literal>, Vec<Literal>) {
    let inf: BTreeSet<Literal> = inferred.literals().collect();
    let tru: BTreeSet<Literal> = truth.literals().collect();
    (
        tru.difference(&inf).copied().collect(),
        inf.difference(&tru).copied().collect(),
    )
}

fn agree_on(a: &DnfCondition, b: &DnfCondition, masks: impl IntoIterator<Item = u64>) -> bool {
    masks.into_iter().all(|m| a.holds_mask(m) == b.holds_mask(m))
}

/// Completions reachable by adding, one act at a time, any act whose
/// can/should-not condition holds; speakers are ignored.
pub fn singleton_closure(truth: &TodFlowGraph) -> BTreeSet<u64> {
    let n = truth.n_acts();
    let mut seen = BTreeSet::from([0u64]);
    let mut frontier = vec![0u64];
    while let Some(c) = frontier.pop() {
        for a in 0..n {
            if c >> a & 1 == 0 && truth.entries()[a].can_shdnt.holds_mask(c) {
                let next = c | 1 << a;
                if seen.insert(next) {
                    frontier.push(next);
                }
            }
        }
    }
    seen
}

/// Scores every act in `scope` (default: all non-database acts of the
/// truth). `inferred` is first re-expressed over the truth's vocabulary.
///
/// The primary figure compares conditions on the completions where the act
/// can actually be observed: `reach` when given, otherwise the speaker-blind
/// singleton closure. The full figure enumerates all `2^N` completions, or
/// samples `100 000` of them when `N > 16`, in which case `sampled` is set
/// and both figures come from the sample.
pub fn graph_recovery_score(
    inferred: &TodFlowGraph,
    truth: &TodFlowGraph,
    reach: Option<&Reachability>,
    scope: Option<&ActionSet>,
) -> Result<RecoveryReport> {
    let inferred = inferred.remap(truth.vocabulary())?;
    let n = truth.n_acts();
    let sampled = n > REACHABILITY_LIMIT;
    let sample: Vec<u64> = if sampled {
        if n > 64 {
            return Err(Error::Config(format!("recovery scoring supports at most 64 acts, got {n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        (0..SAMPLE_SIZE).map(|_| rng.random::<u64>() & mask).collect()
    } else {
        Vec::new()
    };
    let closure = if sampled || reach.is_some() {
        BTreeSet::new()
    } else {
        singleton_closure(truth)
    };

    let scope: ActionSet = match scope {
        Some(s) => s.clone(),
        None => truth
            .vocabulary()
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, l)| role_of(l) != Speaker::Db)
            .map(|(i, _)| i)
            .collect(),
    };
    if scope.is_empty() {
        return Err(Error::Config("no acts to score".into()));
    }

    let compare = |inf: &DnfCondition, tru: &DnfCondition, act: usize| -> ConditionRecovery {
        let (missing, redundant) = literal_diff(inf, tru);
        let (reachable, full) = if sampled {
            let eq = agree_on(inf, tru, sample.iter().copied());
            (eq, eq)
        } else {
            let reachable = match reach {
                Some(r) => agree_on(inf, tru, r.for_act(act).iter().copied()),
                None => agree_on(inf, tru, closure.iter().copied()),
            };
            (reachable, agree_on(inf, tru, 0..1u64 << n))
        };
        ConditionRecovery {
            equivalent_reachable: reachable,
            equivalent_full: full,
            missing,
            redundant,
        }
    };

    let acts: Vec<ActRecovery> = scope
        .iter()
        .map(|act| {
            let (i, t) = (&inferred.entries()[act], &truth.entries()[act]);
            ActRecovery {
                act,
                label: truth.vocabulary().label(act).unwrap_or_default().to_string(),
                can_shdnt: compare(&i.can_shdnt, &t.can_shdnt, act),
                shd: compare(&i.shd, &t.shd, act),
            }
        })
        .collect();
    let rate = |f: &dyn Fn(&ActRecovery) -> bool| acts.iter().filter(|a| f(a)).count() as f64 / acts.len() as f64;
    Ok(RecoveryReport {
        can_shdnt_rate: rate(&|a| a.can_shdnt.equivalent_reachable),
        can_shdnt_rate_full: rate(&|a| a.can_shdnt.equivalent_full),
        shd_rate: rate(&|a| a.shd.equivalent_reachable),
        shd_rate_full: rate(&|a| a.shd.equivalent_full),
        sampled,
        acts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ActConditions;
    use crate::types::ActVocabulary;

    fn graph(can_c: DnfCondition) -> TodFlowGraph {
        let v = ActVocabulary::from_labels(["USER a", "USER b", "SYSTEM c"]).unwrap();
        let mut g = TodFlowGraph::new("d", v);
        g.set_entry(
            2,
            ActConditions {
                can_shdnt: can_c,
                ..ActConditions::default()
            },
        )
        .unwrap();
        g
    }

    #[test]
    fn identical_graphs_score_one() {
        let g = graph(DnfCondition::conjunction([Literal::pos(0), Literal::pos(1)]));
        let r = graph_recovery_score(&g, &g, None, None).unwrap();
        assert_eq!(r.can_shdnt_rate, 1.0);
        assert_eq!(r.can_shdnt_rate_full, 1.0);
        assert_eq!(r.shd_rate, 1.0);
    }

    #[test]
    fn constant_true_misses_two_edges() {
        let truth = graph(DnfCondition::conjunction([Literal::pos(0), Literal::pos(1)]));
        let inferred = graph(DnfCondition::always());
        let r = graph_recovery_score(&inferred, &truth, None, None).unwrap();
        let c = &r.act("SYSTEM c").unwrap().can_shdnt;
        assert!(!c.equivalent_reachable);
        assert_eq!(c.missing, vec![Literal::pos(0), Literal::pos(1)]);
        assert!(c.redundant.is_empty());
    }

    #[test]
    fn reachable_pass_full_fail() {
        // truth: a can only happen after b, so {a, !b} is unreachable, and
        // `c = a` agrees with `c = a & b` everywhere reachable
        let v = ActVocabulary::from_labels(["USER a", "USER b", "SYSTEM c"]).unwrap();
        let mut truth = TodFlowGraph::new("d", v);
        truth
            .set_entry(
                0,
                ActConditions {
                    can_shdnt: DnfCondition::literal(Literal::pos(1)),
                    ..ActConditions::default()
                },
            )
            .unwrap();
        truth
            .set_entry(
                2,
                ActConditions {
                    can_shdnt: DnfCondition::conjunction([Literal::pos(0), Literal::pos(1)]),
                    ..ActConditions::default()
                },
            )
            .unwrap();
        let mut inferred = truth.clone();
        inferred
            .set_entry(
                2,
                ActConditions {
                    can_shdnt: DnfCondition::literal(Literal::pos(0)),
                    ..ActConditions::default()
                },
            )
            .unwrap();
        let r = graph_recovery_score(&inferred, &truth, None, None).unwrap();
        let c = &r.act("SYSTEM c").unwrap().can_shdnt;
        assert!(c.equivalent_reachable);
        assert!(!c.equivalent_full);
        assert_eq!(c.missing, vec![Literal::pos(1)]);
    }

    #[test]
    fn vocabulary_order_is_irrelevant() {
        let truth = graph(DnfCondition::literal(Literal::pos(0)));
        let v2 = ActVocabulary::from_labels(["SYSTEM c", "USER a", "USER b"]).unwrap();
        let mut inferred = TodFlowGraph::new("d", v2);
        inferred
            .set_entry(
                0,
                ActConditions {
                    can_shdnt: DnfCondition::literal(Literal::pos(1)),
                    ..ActConditions::default()
                },
            )
            .unwrap();
        let r = graph_recovery_score(&inferred, &truth, None, None).unwrap();
        assert_eq!(r.can_shdnt_rate, 1.0);
    }
}
