use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{ActVocabulary, ActionSet, CompletionVector, GraphExample, Speaker, Trajectory};

/// Whose acts become prediction targets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    User,
    System,
    #[default]
    Both,
}

impl Target {
    pub fn includes(self, speaker: Speaker) -> bool {
        matches!(
            (self, speaker),
            (Target::User, Speaker::User)
                | (Target::System, Speaker::System)
                | (Target::Both, Speaker::User | Speaker::System)
        )
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "user" => Ok(Target::User),
            "system" => Ok(Target::System),
            "both" => Ok(Target::Both),
            other => Err(Error::Config(format!("unknown target speaker `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    #[default]
    All,
}

/// The `(completion, action)` dataset, grouped by trajectory and ordered by turn.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleDataset {
    pub vocabulary: ActVocabulary,
    pub examples: Vec<GraphExample>,
    pub split: Split,
    /// For each act, the speakers observed executing it.
    act_speakers: Vec<BTreeSet<Speaker>>,
}

impl ExampleDataset {
    pub fn from_examples(vocabulary: ActVocabulary, examples: Vec<GraphExample>, split: Split) -> Self {
        let mut act_speakers = vec![BTreeSet::new(); vocabulary.len()];
        for ex in &examples {
            for act in ex.action.iter() {
                if let Some(s) = act_speakers.get_mut(act) {
                    s.insert(ex.speaker);
                }
            }
        }
        Self {
            vocabulary,
            examples,
            split,
            act_speakers,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_acts(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn speakers_of(&self, act: usize) -> &BTreeSet<Speaker> {
        &self.act_speakers[act]
    }

    /// Examples on which `act` could have been observed: turns taken by a
    /// speaker that executes `act` somewhere in the dataset. An act never
    /// executed is observable everywhere.
    pub fn examples_for_act(&self, act: usize) -> impl Iterator<Item = &GraphExample> + '_ {
        let speakers = &self.act_speakers[act];
        self.examples
            .iter()
            .filter(move |ex| speakers.is_empty() || speakers.contains(&ex.speaker))
    }

    /// Acts executed at least once.
    pub fn executed_acts(&self) -> ActionSet {
        self.act_speakers
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.is_empty())
            .map(|(i, _)| i)
            .collect()
    }

    /// Acts executed by `speaker` at least once.
    pub fn acts_of(&self, speaker: Speaker) -> ActionSet {
        self.act_speakers
            .iter()
            .enumerate()
            .filter(|(_, s)| s.contains(&speaker))
            .map(|(i, _)| i)
            .collect()
    }

    /// Stable hash of the examples, independent of process and platform.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for label in self.vocabulary.labels() {
            hasher.update(label.as_bytes());
            hasher.update([0]);
        }
        for ex in &self.examples {
            hasher.update(ex.trajectory_id.as_bytes());
            hasher.update([0, ex.speaker as u8]);
            hasher.update((ex.turn_index as u64).to_le_bytes());
            for i in ex.completion.ones() {
                hasher.update((i as u64).to_le_bytes());
            }
            hasher.update([0xff]);
            for i in ex.action.iter() {
                hasher.update((i as u64).to_le_bytes());
            }
            hasher.update([0xfe]);
        }
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds one example per target-speaker turn. The completion before turn
/// `t` is the union of every act and database result recorded at turns
/// `0..t`, starting from all-zeros; a system turn therefore sees the acts of
/// the user turn right before it.
pub fn build_examples(
    trajectories: &[Trajectory],
    vocab: &ActVocabulary,
    target: Target,
) -> Result<ExampleDataset> {
    let mut examples = Vec::new();
    for traj in trajectories {
        let mut completion = CompletionVector::zeros(vocab.len());
        for (t, turn) in traj.turns.iter().enumerate() {
            let acts = ActionSet::from_labels(vocab, &turn.acts)?;
            if target.includes(turn.speaker) {
                examples.push(GraphExample {
                    completion: completion.clone(),
                    action: acts.clone(),
                    speaker: turn.speaker,
                    turn_index: t,
                    trajectory_id: traj.id.clone(),
                });
            }
            completion.extend(&acts);
            if let Some(result) = &turn.db_result {
                completion.insert(vocab.require(result)?);
            }
        }
    }
    Ok(ExampleDataset::from_examples(vocab.clone(), examples, Split::All))
}

/// Deterministic per-domain split: trajectories are ordered by a seeded hash
/// of their id and the first `round(ratio * n)` go to train. Both halves keep
/// corpus order.
pub fn split_by_hash(
    trajectories: &[Trajectory],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<Trajectory>, Vec<Trajectory>)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Config(format!("split ratio {ratio} outside [0, 1]")));
    }
    let mut by_domain: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in trajectories.iter().enumerate() {
        by_domain.entry(t.domain.as_str()).or_default().push(i);
    }
    let mut is_train = vec![false; trajectories.len()];
    for indices in by_domain.values() {
        let mut keyed: Vec<([u8; 32], usize)> = indices
            .iter()
            .map(|&i| {
                let mut h = Sha256::new();
                h.update(seed.to_le_bytes());
                h.update(trajectories[i].id.as_bytes());
                (h.finalize().into(), i)
            })
            .collect();
        keyed.sort();
        let n_train = (ratio * indices.len() as f64).round() as usize;
        for &(_, i) in keyed.iter().take(n_train) {
            is_train[i] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = trajectories
        .iter()
        .cloned()
        .zip(is_train)
        .partition(|(_, train)| *train);
    Ok((
        train.into_iter().map(|(t, _)| t).collect(),
        test.into_iter().map(|(t, _)| t).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TurnRecord;

    fn traj(id: &str, turns: Vec<TurnRecord>) -> Trajectory {
        Trajectory {
            id: id.into(),
            domain: "d".into(),
            turns,
        }
    }

    #[test]
    fn user_then_system() {
        let t = traj(
            "0",
            vec![
                TurnRecord::new(Speaker::User, ["A"]),
                TurnRecord::new(Speaker::System, ["B"]),
            ],
        );
        let vocab = ActVocabulary::from_trajectories(std::slice::from_ref(&t)).unwrap();
        let ds = build_examples(&[t], &vocab, Target::System).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.examples[0].completion.ones().collect::<Vec<_>>(), vec![0]);
        assert_eq!(ds.examples[0].action, ActionSet::from([1]));
    }

    #[test]
    fn db_result_enters_completion() {
        let t = traj(
            "0",
            vec![
                TurnRecord::new(Speaker::User, ["A"]),
                TurnRecord::db("query_success"),
                TurnRecord::new(Speaker::System, ["B"]),
                TurnRecord::new(Speaker::User, ["C"]),
            ],
        );
        let vocab = ActVocabulary::from_trajectories(std::slice::from_ref(&t)).unwrap();
        let ds = build_examples(&[t], &vocab, Target::Both).unwrap();
        assert_eq!(ds.len(), 3);
        let last = ds.examples.last().unwrap();
        assert_eq!(last.turn_index, 3);
        let want: Vec<usize> = ["A", "query_success", "B"]
            .iter()
            .map(|l| vocab.index_of(l).unwrap())
            .collect();
        let mut got: Vec<usize> = last.completion.ones().collect();
        got.sort();
        let mut want_sorted = want.clone();
        want_sorted.sort();
        assert_eq!(got, want_sorted);
        assert!(!last.completion.contains(vocab.index_of("C").unwrap()));
    }

    #[test]
    fn one_example_per_turn_for_both() {
        let trajs: Vec<Trajectory> = (0..3)
            .map(|k| {
                traj(
                    &k.to_string(),
                    (0..10)
                        .map(|t| {
                            let speaker = if t % 2 == 0 { Speaker::User } else { Speaker::System };
                            TurnRecord::new(speaker, [format!("act{}", (t + k) % 4)])
                        })
                        .collect(),
                )
            })
            .collect();
        let vocab = ActVocabulary::from_trajectories(&trajs).unwrap();
        let ds = build_examples(&trajs, &vocab, Target::Both).unwrap();
        assert_eq!(ds.len(), 30);
    }

    #[test]
    fn unknown_label_is_vocabulary_error() {
        let t = traj("0", vec![TurnRecord::new(Speaker::User, ["A", "Z"])]);
        let vocab = ActVocabulary::from_labels(["A"]).unwrap();
        match build_examples(&[t], &vocab, Target::Both) {
            Err(Error::Vocabulary(msg)) => assert!(msg.contains('Z')),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn examples_for_act_follow_executing_speaker() {
        let t = traj(
            "0",
            vec![
                TurnRecord::new(Speaker::User, ["A"]),
                TurnRecord::new(Speaker::System, ["B"]),
                TurnRecord::new(Speaker::User, ["A"]),
            ],
        );
        let vocab = ActVocabulary::from_trajectories(std::slice::from_ref(&t)).unwrap();
        let ds = build_examples(&[t], &vocab, Target::Both).unwrap();
        assert_eq!(ds.examples_for_act(0).count(), 2);
        assert_eq!(ds.examples_for_act(1).count(), 1);
        assert_eq!(ds.acts_of(Speaker::System), ActionSet::from([1]));
    }

    #[test]
    fn split_is_deterministic_and_near_ratio() {
        let trajs: Vec<Trajectory> = (0..100)
            .map(|k| traj(&format!("dlg{k}"), vec![TurnRecord::new(Speaker::User, ["A"])]))
            .collect();
        let (train, test) = split_by_hash(&trajs, 0.9, 7).unwrap();
        assert_eq!((train.len(), test.len()), (90, 10));
        let (train2, _) = split_by_hash(&trajs, 0.9, 7).unwrap();
        assert_eq!(train, train2);
        let (train3, _) = split_by_hash(&trajs, 0.9, 8).unwrap();
        assert_ne!(train, train3);
    }
}
