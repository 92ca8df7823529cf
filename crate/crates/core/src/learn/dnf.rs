//! Disjunctive normal form over signed act literals: the executable form of
//! every condition in a graph.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ActVocabulary, CompletionVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    #[serde(rename = "i")]
    pub act: usize,
    #[serde(rename = "neg")]
    pub negated: bool,
}

impl Literal {
    pub fn pos(act: usize) -> Self {
        Self { act, negated: false }
    }

    pub fn neg(act: usize) -> Self {
        Self { act, negated: true }
    }

    #[inline]
    pub fn holds(self, c: &CompletionVector) -> bool {
        c.contains(self.act) != self.negated
    }

    pub fn complement(self) -> Self {
        Self {
            act: self.act,
            negated: !self.negated,
        }
    }
}

/// A conjunction of literals. The empty clause is constant true.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Clause(BTreeSet<Literal>);

impl Clause {
    pub fn new(literals: impl IntoIterator<Item = Literal>) -> Self {
        Self(literals.into_iter().collect())
    }

    pub fn literals(&self) -> impl Iterator<Item = Literal> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, lit: Literal) -> bool {
        self.0.contains(&lit)
    }

    pub fn is_contradictory(&self) -> bool {
        self.0.iter().any(|l| !l.negated && self.0.contains(&l.complement()))
    }

    pub fn holds(&self, c: &CompletionVector) -> bool {
        self.0.iter().all(|l| l.holds(c))
    }

    pub fn holds_with(&self, mut value: impl FnMut(usize) -> bool) -> bool {
        self.0.iter().all(|l| value(l.act) != l.negated)
    }

    fn subsumes(&self, other: &Clause) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn display<'a>(&'a self, vocab: &'a ActVocabulary) -> impl fmt::Display + 'a {
        ClauseDisplay { clause: self, vocab }
    }
}

impl FromIterator<Literal> for Clause {
    fn from_iter<I: IntoIterator<Item = Literal>>(iter: I) -> Self {
        Self::new(iter)
    }
}

/// Normalized DNF: contradictory clauses dropped, duplicates and subsumed
/// clauses removed, clauses sorted. No clauses is `false`; a single empty
/// clause is `true`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<Clause>", into = "Vec<Clause>")]
pub struct DnfCondition {
    clauses: Vec<Clause>,
}

impl DnfCondition {
    pub fn always() -> Self {
        Self {
            clauses: vec![Clause::default()],
        }
    }

    pub fn never() -> Self {
        Self::default()
    }

    pub fn literal(lit: Literal) -> Self {
        Self::conjunction([lit])
    }

    pub fn conjunction(lits: impl IntoIterator<Item = Literal>) -> Self {
        Self::from_clauses([Clause::new(lits)])
    }

    pub fn from_clauses(clauses: impl IntoIterator<Item = Clause>) -> Self {
        let mut clauses: Vec<Clause> = clauses
            .into_iter()
            .filter(|c| !c.is_contradictory())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        // shorter clauses first so a subsuming clause is always seen before
        // anything it subsumes
        clauses.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        let mut kept: Vec<Clause> = Vec::with_capacity(clauses.len());
        for c in clauses {
            if !kept.iter().any(|k| k.subsumes(&c)) {
                kept.push(c);
            }
        }
        Self { clauses: kept }
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn is_true(&self) -> bool {
        self.clauses.len() == 1 && self.clauses[0].is_empty()
    }

    pub fn is_false(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn literal_count(&self) -> usize {
        self.clauses.iter().map(Clause::len).sum()
    }

    pub fn max_act(&self) -> Option<usize> {
        self.literals().map(|l| l.act).max()
    }

    pub fn literals(&self) -> impl Iterator<Item = Literal> + '_ {
        self.clauses.iter().flat_map(Clause::literals)
    }

    /// Evaluation without a bounds check; callers guarantee every literal
    /// index is below `c.len()`.
    #[inline]
    pub fn holds(&self, c: &CompletionVector) -> bool {
        self.clauses.iter().any(|cl| cl.holds(c))
    }

    pub fn holds_with(&self, mut value: impl FnMut(usize) -> bool) -> bool {
        self.clauses.iter().any(|cl| cl.holds_with(&mut value))
    }

    /// Truth of the condition at bit-mask input (bit `i` = act `i` completed).
    pub fn holds_mask(&self, mask: u64) -> bool {
        self.holds_with(|i| i < 64 && mask >> i & 1 == 1)
    }

    pub fn evaluate(&self, c: &CompletionVector) -> Result<bool> {
        if let Some(max) = self.max_act() {
            if max >= c.len() {
                return Err(Error::vocab(format!(
                    "literal index {max} out of range for completion of length {}",
                    c.len()
                )));
            }
        }
        Ok(self.holds(c))
    }

    /// First clause satisfied by `c`, if any.
    pub fn firing_clause(&self, c: &CompletionVector) -> Option<&Clause> {
        self.clauses.iter().find(|cl| cl.holds(c))
    }

    pub fn with_clause(&self, clause: Clause) -> Self {
        Self::from_clauses(self.clauses.iter().cloned().chain([clause]))
    }

    pub fn without_clause(&self, clause: &Clause) -> Option<Self> {
        let pos = self.clauses.iter().position(|c| c == clause)?;
        let mut clauses = self.clauses.clone();
        clauses.remove(pos);
        Some(Self { clauses })
    }

    pub fn display<'a>(&'a self, vocab: &'a ActVocabulary) -> impl fmt::Display + 'a {
        DnfDisplay { dnf: self, vocab }
    }
}

impl From<Vec<Clause>> for DnfCondition {
    fn from(clauses: Vec<Clause>) -> Self {
        Self::from_clauses(clauses)
    }
}

impl From<DnfCondition> for Vec<Clause> {
    fn from(dnf: DnfCondition) -> Self {
        dnf.clauses
    }
}

struct ClauseDisplay<'a> {
    clause: &'a Clause,
    vocab: &'a ActVocabulary,
}

impl fmt::Display for ClauseDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.clause.is_empty() {
            return f.write_str("TRUE");
        }
        for (k, lit) in self.clause.literals().enumerate() {
            if k > 0 {
                f.write_str(" & ")?;
            }
            if lit.negated {
                f.write_str("!")?;
            }
            match self.vocab.label(lit.act) {
                Some(l) => write!(f, "[{l}]")?,
                None => write!(f, "[#{}]", lit.act)?,
            }
        }
        Ok(())
    }
}

struct DnfDisplay<'a> {
    dnf: &'a DnfCondition,
    vocab: &'a ActVocabulary,
}

impl fmt::Display for DnfDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.dnf.is_false() {
            return f.write_str("FALSE");
        }
        for (k, clause) in self.dnf.clauses.iter().enumerate() {
            if k > 0 {
                f.write_str(" | ")?;
            }
            write!(f, "({})", clause.display(self.vocab))?;
        }
        Ok(())
    }
}
