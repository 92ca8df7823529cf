#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use todflow::graph::ActConditions;
use todflow::{ActVocabulary, Clause, DnfCondition, Literal, TodFlowGraph};

pub fn vocab(n: usize) -> ActVocabulary {
    ActVocabulary::from_labels((0..n).map(|i| match i % 3 {
        0 => format!("USER act{i}"),
        1 => format!("SYSTEM act{i}"),
        _ => format!("result{i}"),
    }))
    .unwrap()
}

pub fn random_clause(rng: &mut ChaCha8Rng, n: usize) -> Clause {
    let len = rng.random_range(0..=3.min(n));
    Clause::new((0..len).map(|_| {
        let i = rng.random_range(0..n);
        if rng.random_bool(0.3) {
            Literal::neg(i)
        } else {
            Literal::pos(i)
        }
    }))
}

pub fn random_dnf(rng: &mut ChaCha8Rng, n: usize) -> DnfCondition {
    let k = rng.random_range(0..=3);
    DnfCondition::from_clauses((0..k).map(|_| random_clause(rng, n)))
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> TodFlowGraph {
    let mut g = TodFlowGraph::new("Random", vocab(n));
    for act in 0..n {
        let entry = ActConditions {
            can_shdnt: random_dnf(rng, n),
            shd: random_dnf(rng, n),
            can_only: None,
        };
        g.set_entry(act, entry).unwrap();
    }
    g
}

/// Every condition of `a` and `b` agrees on all `2^n` completions.
pub fn same_truth_tables(a: &TodFlowGraph, b: &TodFlowGraph) -> bool {
    let n = a.n_acts();
    assert_eq!(n, b.n_acts());
    a.entries().iter().zip(b.entries()).all(|(x, y)| {
        (0..1u64 << n).all(|m| x.can_shdnt.holds_mask(m) == y.can_shdnt.holds_mask(m) && x.shd.holds_mask(m) == y.shd.holds_mask(m))
    })
}
