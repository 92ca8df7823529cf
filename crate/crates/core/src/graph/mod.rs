//! The TOD-Flow graph: one merged can/should-not condition and one should
//! condition per act, over a shared vocabulary.

pub mod dot;
pub mod json;

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::dnf::{Clause, DnfCondition};
use crate::learn::LearnConfig;
use crate::types::{ActVocabulary, ActionSet, CompletionVector};

pub use dot::{from_dot, to_dot, DotOptions};
pub use json::{deserialize, serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActConditions {
    pub can_shdnt: DnfCondition,
    pub shd: DnfCondition,
    /// Precondition slot filled only by the regularized baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub can_only: Option<DnfCondition>,
}

impl Default for ActConditions {
    fn default() -> Self {
        Self {
            can_shdnt: DnfCondition::always(),
            shd: DnfCondition::never(),
            can_only: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learn_config: Option<LearnConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_fingerprint: Option<String>,
    /// Anything else found in the file; preserved on round trip.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// Which of an act's conditions an operation addresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionTarget {
    CanShdnt,
    Shd,
}

impl FromStr for ConditionTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "can_shdnt" => Ok(ConditionTarget::CanShdnt),
            "shd" => Ok(ConditionTarget::Shd),
            other => Err(Error::Edit(format!("unknown condition target `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TodFlowGraph {
    domain: String,
    vocabulary: ActVocabulary,
    entries: Vec<ActConditions>,
    metadata: GraphMetadata,
}

fn check_condition(cond: &DnfCondition, n: usize) -> std::result::Result<(), String> {
    match cond.max_act() {
        Some(max) if max >= n => Err(format!("literal index {max} out of range for {n} acts")),
        _ => Ok(()),
    }
}

impl TodFlowGraph {
    /// Graph with default entries everywhere: always allowed, never required.
    pub fn new(domain: impl Into<String>, vocabulary: ActVocabulary) -> Self {
        Self {
            domain: domain.into(),
            entries: vec![ActConditions::default(); vocabulary.len()],
            vocabulary,
            metadata: GraphMetadata::default(),
        }
    }

    pub fn from_parts(
        domain: impl Into<String>,
        vocabulary: ActVocabulary,
        entries: Vec<ActConditions>,
        metadata: GraphMetadata,
    ) -> Result<Self> {
        if entries.len() != vocabulary.len() {
            return Err(Error::vocab(format!(
                "{} entries for a vocabulary of {}",
                entries.len(),
                vocabulary.len()
            )));
        }
        let mut graph = Self::new(domain, vocabulary);
        for (act, entry) in entries.into_iter().enumerate() {
            graph.set_entry(act, entry)?;
        }
        graph.metadata = metadata;
        Ok(graph)
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn vocabulary(&self) -> &ActVocabulary {
        &self.vocabulary
    }

    pub fn n_acts(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn entries(&self) -> &[ActConditions] {
        &self.entries
    }

    pub fn entry(&self, act: usize) -> Option<&ActConditions> {
        self.entries.get(act)
    }

    pub fn condition(&self, act: usize, target: ConditionTarget) -> Option<&DnfCondition> {
        self.entries.get(act).map(|e| match target {
            ConditionTarget::CanShdnt => &e.can_shdnt,
            ConditionTarget::Shd => &e.shd,
        })
    }

    pub fn metadata(&self) -> &GraphMetadata {
        &self.metadata
    }

    pub fn set_metadata(&mut self, metadata: GraphMetadata) {
        self.metadata = metadata;
    }

    pub fn set_entry(&mut self, act: usize, entry: ActConditions) -> Result<()> {
        let n = self.n_acts();
        if act >= n {
            return Err(Error::vocab(format!("act index {act} out of range for {n} acts")));
        }
        for cond in [Some(&entry.can_shdnt), Some(&entry.shd), entry.can_only.as_ref()]
            .into_iter()
            .flatten()
        {
            check_condition(cond, n).map_err(Error::Vocabulary)?;
        }
        self.entries[act] = entry;
        Ok(())
    }

    fn check_len(&self, c: &CompletionVector) -> Result<()> {
        if c.len() != self.n_acts() {
            return Err(Error::vocab(format!(
                "completion of length {} for a graph of {} acts",
                c.len(),
                self.n_acts()
            )));
        }
        Ok(())
    }

    /// Acts whose can/should-not condition holds at `c`.
    pub fn allowed_acts(&self, c: &CompletionVector) -> Result<ActionSet> {
        self.check_len(c)?;
        Ok(self.select(c, |e| &e.can_shdnt))
    }

    /// Acts whose should condition holds at `c`.
    pub fn should_acts(&self, c: &CompletionVector) -> Result<ActionSet> {
        self.check_len(c)?;
        Ok(self.select(c, |e| &e.shd))
    }

    fn select(&self, c: &CompletionVector, pick: impl Fn(&ActConditions) -> &DnfCondition) -> ActionSet {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| pick(e).holds(c))
            .map(|(i, _)| i)
            .collect()
    }

    /// Graph restricted to the given acts: every other act gets the default
    /// entry. Used to score or export one speaker's conditions.
    pub fn restricted_to(&self, acts: &ActionSet) -> Self {
        let mut g = self.clone();
        for (i, e) in g.entries.iter_mut().enumerate() {
            if !acts.contains(i) {
                *e = ActConditions::default();
            }
        }
        g
    }

    pub fn apply_edit(&self, edit: &GraphEdit) -> Result<Self> {
        apply_edit(self, edit)
    }

    /// The same conditions expressed over another vocabulary, matched by
    /// label. Acts missing from `self` get default entries; a literal on an
    /// act missing from `vocab` is an error.
    pub fn remap(&self, vocab: &ActVocabulary) -> Result<Self> {
        if vocab == self.vocabulary() {
            return Ok(self.clone());
        }
        let mapping = self
            .vocabulary
            .labels()
            .iter()
            .map(|l| vocab.index_of(l))
            .collect::<Vec<_>>();
        let map_cond = |cond: &DnfCondition| -> Result<DnfCondition> {
            let clauses = cond
                .clauses()
                .iter()
                .map(|cl| {
                    cl.literals()
                        .map(|lit| {
                            mapping[lit.act]
                                .map(|act| crate::learn::dnf::Literal { act, ..lit })
                                .ok_or_else(|| {
                                    Error::vocab(format!(
                                        "act `{}` is not in the target vocabulary",
                                        self.vocabulary.label(lit.act).unwrap_or("?")
                                    ))
                                })
                        })
                        .collect::<Result<Clause>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DnfCondition::from_clauses(clauses))
        };
        let mut out = Self::new(self.domain.clone(), vocab.clone());
        out.metadata = self.metadata.clone();
        for (i, entry) in self.entries.iter().enumerate() {
            let Some(target) = mapping[i] else {
                if entry != &ActConditions::default() {
                    return Err(Error::vocab(format!(
                        "act `{}` is not in the target vocabulary",
                        self.vocabulary.label(i).unwrap_or("?")
                    )));
                }
                continue;
            };
            out.entries[target] = ActConditions {
                can_shdnt: map_cond(&entry.can_shdnt)?,
                shd: map_cond(&entry.shd)?,
                can_only: entry.can_only.as_ref().map(map_cond).transpose()?,
            };
        }
        Ok(out)
    }
}

pub fn eval_condition(cond: &DnfCondition, c: &CompletionVector) -> Result<bool> {
    cond.evaluate(c)
}

/// A human edit of one condition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum GraphEdit {
    SetCondition {
        act: usize,
        target: ConditionTarget,
        condition: DnfCondition,
    },
    AddClause {
        act: usize,
        target: ConditionTarget,
        clause: Clause,
    },
    RemoveClause {
        act: usize,
        target: ConditionTarget,
        clause: Clause,
    },
}

impl GraphEdit {
    pub fn act(&self) -> usize {
        match self {
            GraphEdit::SetCondition { act, .. }
            | GraphEdit::AddClause { act, .. }
            | GraphEdit::RemoveClause { act, .. } => *act,
        }
    }

    pub fn target(&self) -> ConditionTarget {
        match self {
            GraphEdit::SetCondition { target, .. }
            | GraphEdit::AddClause { target, .. }
            | GraphEdit::RemoveClause { target, .. } => *target,
        }
    }
}

/// Returns an edited copy; `graph` is left untouched.
pub fn apply_edit(graph: &TodFlowGraph, edit: &GraphEdit) -> Result<TodFlowGraph> {
    let n = graph.n_acts();
    let act = edit.act();
    let Some(entry) = graph.entry(act) else {
        return Err(Error::Edit(format!("act index {act} out of range for {n} acts")));
    };
    let current = match edit.target() {
        ConditionTarget::CanShdnt => &entry.can_shdnt,
        ConditionTarget::Shd => &entry.shd,
    };
    let updated = match edit {
        GraphEdit::SetCondition { condition, .. } => condition.clone(),
        GraphEdit::AddClause { clause, .. } => {
            check_condition(&DnfCondition::from_clauses([clause.clone()]), n).map_err(Error::Edit)?;
            current.with_clause(clause.clone())
        }
        GraphEdit::RemoveClause { clause, .. } => {
            let normalized = DnfCondition::from_clauses([clause.clone()]);
            let target_clause = normalized.clauses().first().unwrap_or(clause);
            current.without_clause(target_clause).ok_or_else(|| {
                Error::Edit(format!(
                    "clause {} not present in condition of `{}`",
                    target_clause.display(graph.vocabulary()),
                    graph.vocabulary().label(act).unwrap_or("?")
                ))
            })?
        }
    };
    check_condition(&updated, n).map_err(Error::Edit)?;
    let mut entry = entry.clone();
    match edit.target() {
        ConditionTarget::CanShdnt => entry.can_shdnt = updated,
        ConditionTarget::Shd => entry.shd = updated,
    }
    let mut out = graph.clone();
    out.entries[act] = entry;
    Ok(out)
}
