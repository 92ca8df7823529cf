//! Weighted-Gini decision trees over binary completion features, and their
//! conversion to DNF.
//!
//! Rows are aggregated by distinct completion so a node only ever scans the
//! distinct inputs it covers. Split search visits features in index order;
//! equal-gain candidates are broken by a seeded draw.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dnf::{Clause, DnfCondition, Literal};
use crate::types::{CompletionVector, GraphExample};

const GAIN_TIE_EPS: f64 = 1e-12;

/// Distinct completion with its positive / negative example counts.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledRow {
    pub completion: CompletionVector,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Aggregates `(completion, a[act])` pairs. Output order is the completion
/// order, so it does not depend on example order.
pub fn label_rows<'a>(examples: impl IntoIterator<Item = &'a GraphExample>, act: usize) -> Vec<LabeledRow> {
    let mut counts: BTreeMap<&CompletionVector, (usize, usize)> = BTreeMap::new();
    for ex in examples {
        let entry = counts.entry(&ex.completion).or_default();
        if ex.action.contains(act) {
            entry.0 += 1;
        } else {
            entry.1 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(c, (n_pos, n_neg))| LabeledRow {
            completion: c.clone(),
            n_pos,
            n_neg,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub positive: f64,
    pub negative: f64,
}

impl ClassWeights {
    pub const EQUAL: ClassWeights = ClassWeights {
        positive: 1.0,
        negative: 1.0,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf_examples: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    pub n_pos: usize,
    pub n_neg: usize,
    pub w_pos: f64,
    pub w_neg: f64,
}

impl LeafStats {
    fn add(&mut self, row: &LabeledRow, w: ClassWeights) {
        self.n_pos += row.n_pos;
        self.n_neg += row.n_neg;
        self.w_pos += row.n_pos as f64 * w.positive;
        self.w_neg += row.n_neg as f64 * w.negative;
    }

    fn minus(&self, other: &LeafStats) -> LeafStats {
        LeafStats {
            n_pos: self.n_pos - other.n_pos,
            n_neg: self.n_neg - other.n_neg,
            w_pos: self.w_pos - other.w_pos,
            w_neg: self.w_neg - other.w_neg,
        }
    }

    pub fn count(&self) -> usize {
        self.n_pos + self.n_neg
    }

    /// Unweighted fraction of positive examples; 0 for an empty leaf.
    pub fn purity(&self) -> f64 {
        if self.count() == 0 {
            0.0
        } else {
            self.n_pos as f64 / self.count() as f64
        }
    }

    /// Rule-of-succession estimate `(n_pos + 1) / (n + 2)`.
    pub fn smoothed_purity(&self) -> f64 {
        (self.n_pos as f64 + 1.0) / (self.count() as f64 + 2.0)
    }

    /// Weighted majority; ties go to the negative class.
    pub fn predicts_positive(&self) -> bool {
        self.w_pos > self.w_neg
    }

    /// Weighted error of predicting the leaf's majority class.
    fn weighted_error(&self) -> f64 {
        if self.predicts_positive() {
            self.w_neg
        } else {
            self.w_pos
        }
    }

    /// Weighted Gini impurity times total weight.
    fn weighted_gini(&self) -> f64 {
        let total = self.w_pos + self.w_neg;
        if total <= 0.0 {
            return 0.0;
        }
        let p = self.w_pos / total;
        total * 2.0 * p * (1.0 - p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf(LeafStats),
    Split {
        feature: usize,
        stats: LeafStats,
        /// Branch where the feature is 0.
        absent: Box<TreeNode>,
        /// Branch where the feature is 1.
        present: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn stats(&self) -> &LeafStats {
        match self {
            TreeNode::Leaf(s) | TreeNode::Split { stats: s, .. } => s,
        }
    }

    fn count_nodes(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 1,
            TreeNode::Split { absent, present, .. } => 1 + absent.count_nodes() + present.count_nodes(),
        }
    }

    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 0,
            TreeNode::Split { absent, present, .. } => 1 + absent.depth().max(present.depth()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub n_features: usize,
}

/// Which leaves count as positive when reading a tree out as a condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LeafRule {
    /// Weighted-majority class of the leaf.
    PredictedClass,
    /// Smoothed purity at or above the threshold.
    Purity(f64),
}

impl LeafRule {
    pub fn selects(&self, leaf: &LeafStats) -> bool {
        match *self {
            LeafRule::PredictedClass => leaf.predicts_positive(),
            LeafRule::Purity(threshold) => leaf.count() > 0 && leaf.smoothed_purity() >= threshold,
        }
    }
}

impl DecisionTree {
    pub fn fit(rows: &[LabeledRow], n_features: usize, weights: ClassWeights, params: TreeParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let all: Vec<&LabeledRow> = rows.iter().collect();
        let min_leaf = params.min_leaf_examples.max(1);
        let root = grow(&all, n_features, weights, params.max_depth, min_leaf, &mut rng);
        Self { root, n_features }
    }

    pub fn leaf(&self, c: &CompletionVector) -> &LeafStats {
        self.leaf_with(|i| c.contains(i))
    }

    pub fn leaf_with(&self, mut value: impl FnMut(usize) -> bool) -> &LeafStats {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf(s) => return s,
                TreeNode::Split {
                    feature,
                    absent,
                    present,
                    ..
                } => node = if value(*feature) { present } else { absent },
            }
        }
    }

    pub fn selects(&self, rule: LeafRule, c: &CompletionVector) -> bool {
        rule.selects(self.leaf(c))
    }

    pub fn node_count(&self) -> usize {
        self.root.count_nodes()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Every leaf with its root-to-leaf literal path.
    pub fn leaves(&self) -> Vec<(Vec<Literal>, &LeafStats)> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        collect_leaves(&self.root, &mut path, &mut out);
        out
    }

    /// Preorder indices of split nodes.
    pub fn internal_nodes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut next = 0;
        index_internal(&self.root, &mut next, &mut out);
        out
    }

    /// Minimal cost-complexity pruning: replaces subtrees by leaves so that
    /// `weighted error / total weight + cost * leaves` is minimal. Collapsing
    /// sibling leaves of the same class is always free, so any positive cost
    /// also merges those.
    pub fn prune(&mut self, cost: f64) {
        if cost <= 0.0 {
            return;
        }
        let total = self.root.stats().w_pos + self.root.stats().w_neg;
        if total > 0.0 {
            prune_node(&mut self.root, cost * total);
        }
    }

    /// Copy of the tree with the split at preorder index `id` replaced by a
    /// leaf carrying that node's statistics.
    pub fn collapsed(&self, id: usize) -> Self {
        let mut root = self.root.clone();
        let mut next = 0;
        collapse_at(&mut root, id, &mut next);
        Self {
            root,
            n_features: self.n_features,
        }
    }
}

fn collect_leaves<'a>(node: &'a TreeNode, path: &mut Vec<Literal>, out: &mut Vec<(Vec<Literal>, &'a LeafStats)>) {
    match node {
        TreeNode::Leaf(s) => out.push((path.clone(), s)),
        TreeNode::Split {
            feature,
            absent,
            present,
            ..
        } => {
            path.push(Literal::neg(*feature));
            collect_leaves(absent, path, out);
            path.pop();
            path.push(Literal::pos(*feature));
            collect_leaves(present, path, out);
            path.pop();
        }
    }
}

fn index_internal(node: &TreeNode, next: &mut usize, out: &mut Vec<usize>) {
    let id = *next;
    *next += 1;
    if let TreeNode::Split { absent, present, .. } = node {
        out.push(id);
        index_internal(absent, next, out);
        index_internal(present, next, out);
    }
}

fn collapse_at(node: &mut TreeNode, target: usize, next: &mut usize) -> bool {
    let id = *next;
    *next += 1;
    if id == target {
        *node = TreeNode::Leaf(*node.stats());
        return true;
    }
    match node {
        TreeNode::Leaf(_) => false,
        TreeNode::Split { absent, present, .. } => {
            collapse_at(absent, target, next) || collapse_at(present, target, next)
        }
    }
}

/// Returns the minimal `error + leaf_cost * leaves` of the subtree after
/// pruning it in place.
fn prune_node(node: &mut TreeNode, leaf_cost: f64) -> f64 {
    let as_leaf = node.stats().weighted_error() + leaf_cost;
    let kept = match node {
        TreeNode::Leaf(_) => return as_leaf,
        TreeNode::Split { absent, present, .. } => prune_node(absent, leaf_cost) + prune_node(present, leaf_cost),
    };
    if as_leaf <= kept + GAIN_TIE_EPS {
        *node = TreeNode::Leaf(*node.stats());
        as_leaf
    } else {
        kept
    }
}

fn grow(
    rows: &[&LabeledRow],
    n_features: usize,
    weights: ClassWeights,
    depth_left: usize,
    min_leaf: usize,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let mut stats = LeafStats::default();
    for r in rows {
        stats.add(r, weights);
    }
    if depth_left == 0 || stats.w_pos <= 0.0 || stats.w_neg <= 0.0 || stats.count() < 2 * min_leaf {
        return TreeNode::Leaf(stats);
    }

    let mut present = vec![LeafStats::default(); n_features];
    for r in rows {
        for f in r.completion.ones() {
            if f < n_features {
                present[f].add(r, weights);
            }
        }
    }

    let parent_impurity = stats.weighted_gini();
    let mut best_gain = f64::NEG_INFINITY;
    let mut ties: Vec<usize> = Vec::new();
    for (f, p) in present.iter().enumerate() {
        let a = stats.minus(p);
        if p.count() < min_leaf || a.count() < min_leaf {
            continue;
        }
        let gain = parent_impurity - p.weighted_gini() - a.weighted_gini();
        if gain > best_gain + GAIN_TIE_EPS {
            best_gain = gain;
            ties.clear();
            ties.push(f);
        } else if (gain - best_gain).abs() <= GAIN_TIE_EPS {
            ties.push(f);
        }
    }
    if ties.is_empty() {
        return TreeNode::Leaf(stats);
    }
    let feature = if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.random_range(0..ties.len())]
    };

    let (on, off): (Vec<&LabeledRow>, Vec<&LabeledRow>) =
        rows.iter().partition(|r| r.completion.contains(feature));
    let absent = grow(&off, n_features, weights, depth_left - 1, min_leaf, rng);
    let present = grow(&on, n_features, weights, depth_left - 1, min_leaf, rng);
    TreeNode::Split {
        feature,
        stats,
        absent: Box::new(absent),
        present: Box::new(present),
    }
}

/// One clause per selected leaf: the conjunction of the signed tests on its
/// root-to-leaf path.
pub fn tree_to_dnf(tree: &DecisionTree, rule: LeafRule) -> DnfCondition {
    DnfCondition::from_clauses(
        tree.leaves()
            .into_iter()
            .filter(|(_, leaf)| rule.selects(leaf))
            .map(|(path, _)| Clause::new(path)),
    )
}
