//! Synthetic stand-in for a base policy: perturbs the gold act set of a turn.
//!
//! Algorithm, per request, for candidate `j = 0..k` in order, using one
//! ChaCha8 generator seeded with `seed` on a stream derived from the first
//! eight bytes (little endian) of `sha256(trajectory_id ‖ 0x00 ‖ turn_le64)`:
//! 1. for each gold act in ascending index order, draw `u ~ U[0,1)`; drop the
//!    act if `u < dropout_p`;
//! 2. for each act of the speaker's pool not in the gold set, ascending, draw
//!    `u`; insert it if `u < spurious_p / N` where `N` is the pool size.
//!
//! Each candidate's score is the log-likelihood of its draw. Candidates are
//! returned in draw order by default, so rank 0 is an ordinary sample rather
//! than a privileged one; `RankOrder::Likelihood` sorts by score instead.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_k, CandidateProvider, ProviderCandidate, ProviderError, ProviderReply, ProviderRequest};
use crate::error::{Error, Result};
use crate::ingest::Target;
use crate::types::{ActVocabulary, ActionSet, Speaker, Trajectory};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankOrder {
    #[default]
    Draw,
    Likelihood,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoisyOracleConfig {
    pub dropout_p: f64,
    pub spurious_p: f64,
    pub seed: u64,
    pub rank_order: RankOrder,
}

impl Default for NoisyOracleConfig {
    fn default() -> Self {
        Self {
            dropout_p: 0.3,
            spurious_p: 0.2,
            seed: 0,
            rank_order: RankOrder::Draw,
        }
    }
}

impl NoisyOracleConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("dropout_p", self.dropout_p), ("spurious_p", self.spurious_p)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct NoisyOracleProvider {
    cfg: NoisyOracleConfig,
    gold: HashMap<(String, usize), (Speaker, ActionSet)>,
    pools: HashMap<Speaker, Vec<usize>>,
}

fn stream_for(trajectory: &str, turn: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(trajectory.as_bytes());
    h.update([0]);
    h.update((turn as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

fn ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

impl NoisyOracleProvider {
    /// Gold sets are the recorded acts of every target-speaker turn; the
    /// spurious pool of a speaker is every act that speaker executes in
    /// `trajectories`.
    pub fn from_trajectories(
        cfg: NoisyOracleConfig,
        vocab: &ActVocabulary,
        trajectories: &[Trajectory],
        target: Target,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut gold = HashMap::new();
        let mut pools: HashMap<Speaker, ActionSet> = HashMap::new();
        for traj in trajectories {
            for (t, turn) in traj.turns.iter().enumerate() {
                if !target.includes(turn.speaker) {
                    continue;
                }
                let acts = ActionSet::from_labels(vocab, &turn.acts)?;
                let pool = pools.entry(turn.speaker).or_default();
                for a in acts.iter() {
                    pool.insert(a);
                }
                gold.insert((traj.id.clone(), t), (turn.speaker, acts));
            }
        }
        Ok(Self {
            cfg,
            gold,
            pools: pools
                .into_iter()
                .map(|(s, set)| (s, set.iter().collect()))
                .collect(),
        })
    }

    pub fn with_pool(mut self, speaker: Speaker, pool: &ActionSet) -> Self {
        self.pools.insert(speaker, pool.iter().collect());
        self
    }

    pub fn config(&self) -> &NoisyOracleConfig {
        &self.cfg
    }

    /// The candidate list for one gold set; exposed for golden tests.
    pub fn sample(&self, trajectory: &str, turn: usize, gold: &ActionSet, pool: &[usize], k: usize) -> ProviderReply {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(stream_for(trajectory, turn));
        let drop_p = self.cfg.dropout_p;
        let extras: Vec<usize> = pool.iter().copied().filter(|a| !gold.contains(*a)).collect();
        let insert_p = if pool.is_empty() {
            0.0
        } else {
            self.cfg.spurious_p / pool.len() as f64
        };

        let mut candidates: Vec<ProviderCandidate> = (0..k)
            .map(|_| {
                let mut acts = ActionSet::new();
                let mut score = 0.0;
                for a in gold.iter() {
                    if rng.random::<f64>() < drop_p {
                        score += ln(drop_p);
                    } else {
                        score += ln(1.0 - drop_p);
                        acts.insert(a);
                    }
                }
                for &a in &extras {
                    if rng.random::<f64>() < insert_p {
                        score += ln(insert_p);
                        acts.insert(a);
                    } else {
                        score += ln(1.0 - insert_p);
                    }
                }
                ProviderCandidate {
                    acts,
                    text: None,
                    score: Some(score),
                }
            })
            .collect();
        if self.cfg.rank_order == RankOrder::Likelihood {
            // stable: equal scores keep draw order
            candidates.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
        }
        ProviderReply { candidates }
    }
}

impl CandidateProvider for NoisyOracleProvider {
    fn candidates(&mut self, request: &ProviderRequest) -> Result<ProviderReply, ProviderError> {
        check_k(request)?;
        let (speaker, gold) = self
            .gold
            .get(&(request.trajectory_id.clone(), request.turn_index))
            .ok_or_else(|| ProviderError::MissingCandidates {
                trajectory: request.trajectory_id.clone(),
                turn: request.turn_index,
            })?;
        let pool = self.pools.get(speaker).map(Vec::as_slice).unwrap_or(&[]);
        Ok(self.sample(&request.trajectory_id, request.turn_index, gold, pool, request.k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle(dropout_p: f64, spurious_p: f64) -> NoisyOracleProvider {
        NoisyOracleProvider {
            cfg: NoisyOracleConfig {
                dropout_p,
                spurious_p,
                seed: 0,
                rank_order: RankOrder::Draw,
            },
            gold: HashMap::new(),
            pools: HashMap::new(),
        }
    }

    const POOL: [usize; 6] = [0, 1, 2, 3, 4, 5];

    #[test]
    fn noiseless_returns_gold() {
        let gold = ActionSet::from([1, 4]);
        let reply = oracle(0.0, 0.0).sample("t", 2, &gold, &POOL, 10);
        assert_eq!(reply.len(), 10);
        assert!(reply.candidates.iter().all(|c| c.acts == gold));
    }

    #[test]
    fn full_dropout_gives_empty_sets() {
        let reply = oracle(1.0, 0.0).sample("t", 2, &ActionSet::from([1, 4]), &POOL, 10);
        assert!(reply.candidates.iter().all(|c| c.acts.is_empty()));
    }

    #[test]
    fn seeded_and_turn_dependent() {
        let o = oracle(0.3, 0.2);
        let gold = ActionSet::from([0, 2, 3]);
        assert_eq!(o.sample("t", 2, &gold, &POOL, 10), o.sample("t", 2, &gold, &POOL, 10));
        assert_ne!(o.sample("t", 2, &gold, &POOL, 10), o.sample("t", 3, &gold, &POOL, 10));
    }

    #[test]
    fn likelihood_order_sorts_scores() {
        let mut o = oracle(0.3, 0.2);
        o.cfg.rank_order = RankOrder::Likelihood;
        let reply = o.sample("t", 2, &ActionSet::from([0, 2, 3]), &POOL, 10);
        let scores: Vec<f64> = reply.candidates.iter().map(|c| c.score.unwrap()).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rejects_bad_probability() {
        let cfg = NoisyOracleConfig {
            dropout_p: 1.5,
            ..NoisyOracleConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
