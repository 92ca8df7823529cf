//! Empirical estimates of the condition-learning objectives.
//!
//! Every quantity is a frequency ratio over the examples on which the act is
//! observable. A conditional whose conditioning event never occurs is `None`
//! (serialized as `null`), never zero.

use serde::{Deserialize, Serialize};

use super::dnf::DnfCondition;
use crate::ingest::ExampleDataset;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    pub n_examples: usize,
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
    /// `P(a = 1 | f = 1)`: the should objective.
    pub shd: Option<f64>,
    /// `P(a = 0 | f = 1)`: the should-not objective.
    pub shdnt: Option<f64>,
    /// `P(f = 1 | a = 1)`: the can objective, and the first term of the
    /// merged can/should-not objective.
    pub can: Option<f64>,
    /// `P(f = 0 | a = 0)`: the second term of the merged objective.
    pub reject_negatives: Option<f64>,
    /// `P(f = a)`: behavioural-cloning accuracy.
    pub bc: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ObjectiveReport {
    pub fn from_counts(true_pos: usize, false_pos: usize, false_neg: usize, true_neg: usize) -> Self {
        let n = true_pos + false_pos + false_neg + true_neg;
        Self {
            n_examples: n,
            true_pos,
            false_pos,
            false_neg,
            true_neg,
            shd: ratio(true_pos, true_pos + false_pos),
            shdnt: ratio(false_pos, true_pos + false_pos),
            can: ratio(true_pos, true_pos + false_neg),
            reject_negatives: ratio(true_neg, true_neg + false_pos),
            bc: ratio(true_pos + true_neg, n),
        }
    }

    /// `P(f=1 | a=1) + alpha * P(f=0 | a=0)`. An undefined term (no examples
    /// of that class) contributes nothing; both undefined gives `None`.
    pub fn can_shdnt(&self, alpha: f64) -> Option<f64> {
        match (self.can, self.reject_negatives) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(0.0) + alpha * b.unwrap_or(0.0)),
        }
    }
}

pub fn evaluate_objectives(condition: &DnfCondition, dataset: &ExampleDataset, act: usize) -> ObjectiveReport {
    let (mut tp, mut fp, mut fneg, mut tn) = (0, 0, 0, 0);
    for ex in dataset.examples_for_act(act) {
        let fired = condition.holds(&ex.completion);
        match (fired, ex.action.contains(act)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => tn += 1,
        }
    }
    ObjectiveReport::from_counts(tp, fp, fneg, tn)
}
