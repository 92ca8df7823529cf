use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ActionSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: ActionSet,
    pub gold: ActionSet,
}

/// Set precision, recall and F1. Two empty sets score 1 on everything; if
/// exactly one is empty every figure is 0.
pub fn f1_turn(predicted: &ActionSet, gold: &ActionSet) -> TurnScore {
    let (precision, recall, f1) = match (predicted.is_empty(), gold.is_empty()) {
        (true, true) => (1.0, 1.0, 1.0),
        (true, false) | (false, true) => (0.0, 0.0, 0.0),
        (false, false) => {
            let hit = predicted.intersection(gold).len() as f64;
            let p = hit / predicted.len() as f64;
            let r = hit / gold.len() as f64;
            let f = if hit == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            (p, r, f)
        }
    };
    TurnScore {
        precision,
        recall,
        f1,
        predicted: predicted.clone(),
        gold: gold.clone(),
    }
}

pub fn score_domain(turn_f1: &[f64]) -> Result<f64> {
    if turn_f1.is_empty() {
        return Err(Error::NoTurns);
    }
    Ok(turn_f1.iter().sum::<f64>() / turn_f1.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainScore {
    pub mean_f1: f64,
    pub n_turns: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Summary {
    /// Unweighted mean of the per-domain means.
    pub macro_f1: f64,
    /// Mean over all turns pooled across domains.
    pub micro_f1: f64,
    pub domains: BTreeMap<String, DomainScore>,
}

/// Aggregates `(domain, turn F1)` pairs.
pub fn summarize<'a>(turns: impl IntoIterator<Item = (&'a str, f64)>) -> Result<F1Summary> {
    let mut by_domain: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (d, f) in turns {
        by_domain.entry(d.to_string()).or_default().push(f);
    }
    if by_domain.is_empty() {
        return Err(Error::NoTurns);
    }
    let mut domains = BTreeMap::new();
    let (mut total, mut n) = (0.0, 0);
    for (d, fs) in by_domain {
        total += fs.iter().sum::<f64>();
        n += fs.len();
        domains.insert(
            d,
            DomainScore {
                mean_f1: score_domain(&fs)?,
                n_turns: fs.len(),
            },
        );
    }
    let macro_f1 = domains.values().map(|s| s.mean_f1).sum::<f64>() / domains.len() as f64;
    Ok(F1Summary {
        macro_f1,
        micro_f1: total / n as f64,
        domains,
    })
}
