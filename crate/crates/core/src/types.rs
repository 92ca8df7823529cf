//! Domain types shared by every stage of the pipeline.
//!
//! Act labels are flat strings such as `"SYSTEM inform phone"`. Database
//! results (`"query_success"`) live in the same vocabulary so they can be set
//! in a completion vector, but they never appear in a user or system action set.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Collapses internal whitespace runs and trims the ends.
pub fn normalize_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Bijective map between act labels and dense indices, in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ActVocabulary {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl ActVocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocabulary from an explicit label list. Duplicates (after
    /// whitespace normalization) and empty labels are rejected.
    pub fn from_labels<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Self::new();
        for raw in labels {
            let label = normalize_label(raw.as_ref());
            if label.is_empty() {
                return Err(Error::vocab("empty act label"));
            }
            if vocab.index.contains_key(&label) {
                return Err(Error::vocab(format!("duplicate act label `{label}`")));
            }
            vocab.push(label);
        }
        Ok(vocab)
    }

    /// Every act and database-result label in first-occurrence order.
    pub fn from_trajectories(trajectories: &[Trajectory]) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut vocab = Self::new();
        for traj in trajectories {
            for turn in &traj.turns {
                for act in &turn.acts {
                    vocab.insert(act)?;
                }
                if let Some(result) = &turn.db_result {
                    vocab.insert(result)?;
                }
            }
        }
        Ok(vocab)
    }

    /// Returns the index of `label`, adding it when new.
    pub fn insert(&mut self, label: &str) -> Result<usize> {
        let label = normalize_label(label);
        if label.is_empty() {
            return Err(Error::vocab("empty act label"));
        }
        if let Some(&i) = self.index.get(&label) {
            return Ok(i);
        }
        Ok(self.push(label))
    }

    fn push(&mut self, label: String) -> usize {
        let i = self.labels.len();
        self.index.insert(label.clone(), i);
        self.labels.push(label);
        i
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index
            .get(label)
            .or_else(|| self.index.get(&normalize_label(label)))
            .copied()
    }

    /// Like [`index_of`](Self::index_of) but fails with a vocabulary error.
    pub fn require(&self, label: &str) -> Result<usize> {
        self.index_of(label)
            .ok_or_else(|| Error::vocab(format!("label `{label}` is not in the vocabulary")))
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl TryFrom<Vec<String>> for ActVocabulary {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        Self::from_labels(labels)
    }
}

impl From<ActVocabulary> for Vec<String> {
    fn from(vocab: ActVocabulary) -> Self {
        vocab.labels
    }
}

/// Which acts (and database results) have occurred before the current turn.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CompletionVector(FixedBitSet);

impl CompletionVector {
    pub fn zeros(len: usize) -> Self {
        Self(FixedBitSet::with_capacity(len))
    }

    /// Bit `i` of `mask` becomes act `i`. Only the low `len` bits are read.
    pub fn from_mask(len: usize, mask: u64) -> Self {
        let mut c = Self::zeros(len);
        for i in 0..len.min(64) {
            if mask >> i & 1 == 1 {
                c.0.insert(i);
            }
        }
        c
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut c = Self::zeros(len);
        for i in indices {
            c.insert(i);
        }
        c
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.len() == 0
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.contains(index)
    }

    /// Panics if `index >= len`.
    pub fn insert(&mut self, index: usize) {
        self.0.insert(index);
    }

    pub fn set(&mut self, index: usize, value: bool) {
        self.0.set(index, value);
    }

    pub fn union_with(&mut self, other: &CompletionVector) {
        self.0.union_with(&other.0);
    }

    pub fn extend(&mut self, acts: &ActionSet) {
        for i in acts.iter() {
            self.0.insert(i);
        }
    }

    pub fn is_subset(&self, other: &CompletionVector) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.ones()
    }

    pub fn count_ones(&self) -> usize {
        self.0.count_ones(..)
    }

    /// Inverse of [`from_mask`](Self::from_mask) for vectors of at most 64 acts.
    pub fn to_mask(&self) -> u64 {
        self.ones()
            .filter(|&i| i < 64)
            .fold(0u64, |m, i| m | 1 << i)
    }
}

impl fmt::Debug for CompletionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bits: String = (0..self.len())
            .map(|i| if self.contains(i) { '1' } else { '0' })
            .collect();
        write!(f, "CompletionVector({bits})")
    }
}

/// Set of act indices executed at one turn.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionSet(BTreeSet<usize>);

impl ActionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, act: usize) -> bool {
        self.0.contains(&act)
    }

    pub fn insert(&mut self, act: usize) -> bool {
        self.0.insert(act)
    }

    pub fn remove(&mut self, act: usize) -> bool {
        self.0.remove(&act)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn union(&self, other: &ActionSet) -> ActionSet {
        ActionSet(self.0.union(&other.0).copied().collect())
    }

    pub fn intersection(&self, other: &ActionSet) -> ActionSet {
        ActionSet(self.0.intersection(&other.0).copied().collect())
    }

    pub fn difference(&self, other: &ActionSet) -> ActionSet {
        ActionSet(self.0.difference(&other.0).copied().collect())
    }

    pub fn is_subset(&self, other: &ActionSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn labels<'a>(&'a self, vocab: &'a ActVocabulary) -> impl Iterator<Item = &'a str> + 'a {
        self.iter().filter_map(move |i| vocab.label(i))
    }

    pub fn from_labels<S: AsRef<str>>(vocab: &ActVocabulary, labels: &[S]) -> Result<Self> {
        labels.iter().map(|l| vocab.require(l.as_ref())).collect()
    }
}

impl FromIterator<usize> for ActionSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        ActionSet(iter.into_iter().collect())
    }
}

impl<const N: usize> From<[usize; N]> for ActionSet {
    fn from(acts: [usize; N]) -> Self {
        acts.into_iter().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    System,
    Db,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::User => "user",
            Speaker::System => "system",
            Speaker::Db => "db",
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One speaker record within a dialogue. Labels are kept as strings until a
/// vocabulary is fixed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub speaker: Speaker,
    #[serde(default)]
    pub acts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub db_result: Option<String>,
}

impl TurnRecord {
    pub fn new(speaker: Speaker, acts: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let mut turn = Self {
            speaker,
            acts: Vec::new(),
            utterance: None,
            db_result: None,
        };
        for act in acts {
            turn.push_act(act.into());
        }
        turn
    }

    pub fn db(result: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::Db,
            acts: Vec::new(),
            utterance: None,
            db_result: Some(normalize_label(&result.into())),
        }
    }

    /// Appends a label unless it is already present.
    pub fn push_act(&mut self, act: String) {
        let act = normalize_label(&act);
        if !self.acts.contains(&act) {
            self.acts.push(act);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub domain: String,
    pub turns: Vec<TurnRecord>,
}

/// One `(completion, action)` pair of the graph-inference dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphExample {
    pub completion: CompletionVector,
    pub action: ActionSet,
    pub speaker: Speaker,
    pub turn_index: usize,
    pub trajectory_id: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(turns: Vec<TurnRecord>) -> Trajectory {
        Trajectory {
            id: "t".into(),
            domain: "d".into(),
            turns,
        }
    }

    #[test]
    fn vocabulary_union_in_first_occurrence_order() {
        let a = traj(vec![TurnRecord::new(Speaker::User, ["A", "B"])]);
        let b = traj(vec![TurnRecord::new(Speaker::System, ["B", "C"])]);
        let vocab = ActVocabulary::from_trajectories(&[a, b]).unwrap();
        assert_eq!(vocab.labels(), ["A", "B", "C"]);
    }

    #[test]
    fn vocabulary_includes_db_results() {
        let t = traj(vec![
            TurnRecord::new(Speaker::System, ["SYSTEM query FindCar"]),
            TurnRecord::db("query_success"),
        ]);
        let vocab = ActVocabulary::from_trajectories(&[t]).unwrap();
        assert!(vocab.index_of("query_success").is_some());
    }

    #[test]
    fn vocabulary_dedupes_repeated_labels() {
        let t = traj(vec![
            TurnRecord::new(Speaker::User, ["A"]),
            TurnRecord::new(Speaker::User, ["A"]),
        ]);
        let vocab = ActVocabulary::from_trajectories(&[t]).unwrap();
        assert_eq!(vocab.len(), 1);
    }

    #[test]
    fn vocabulary_rejects_empty_corpus() {
        assert!(matches!(
            ActVocabulary::from_trajectories(&[]),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn vocabulary_normalizes_whitespace() {
        let err = ActVocabulary::from_labels(["SYSTEM  inform phone", "SYSTEM inform phone "]);
        assert!(err.is_err());
        let vocab = ActVocabulary::from_labels(["SYSTEM  inform\tphone"]).unwrap();
        assert_eq!(vocab.index_of("SYSTEM inform phone"), Some(0));
        assert!(ActVocabulary::from_labels(["  "]).is_err());
    }

    #[test]
    fn vocabulary_serializes_as_ordered_list() {
        let vocab = ActVocabulary::from_labels(["b", "a"]).unwrap();
        let json = serde_json::to_string(&vocab).unwrap();
        assert_eq!(json, r#"["b","a"]"#);
        let back: ActVocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vocab);
    }

    #[test]
    fn completion_mask_round_trip() {
        let c = CompletionVector::from_mask(5, 0b10110);
        assert_eq!(c.ones().collect::<Vec<_>>(), vec![1, 2, 4]);
        assert_eq!(c.to_mask(), 0b10110);
    }
}
