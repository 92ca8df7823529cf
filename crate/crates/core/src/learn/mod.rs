//! Per-act condition learning by decision-tree induction.
//!
//! Three objectives are fitted per act:
//! - should (`fit_shd`): a tree with up-weighted negatives, read out through
//!   leaves whose smoothed purity reaches `shd_leaf_purity`;
//! - can-and-not-should-not (`fit_can_shdnt`): a tree with negatives weighted
//!   by `alpha`, pruned, and never scoring below a constant on
//!   `P(f=1 | a=1) + alpha * P(f=0 | a=0)`;
//! - behavioural cloning (`fit_bc`): plain accuracy.
//!
//! `fit_can_regularized` is the precondition-only baseline.

pub mod dnf;
pub mod objectives;
pub mod tree;

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use self::dnf::DnfCondition;
use self::objectives::{evaluate_objectives, ObjectiveReport};
use self::tree::{label_rows, tree_to_dnf, ClassWeights, DecisionTree, LeafRule, TreeParams};
use crate::error::{Error, Result};
use crate::graph::{ActConditions, GraphMetadata, TodFlowGraph};
use crate::ingest::ExampleDataset;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    /// Weight of the reject-negatives term relative to the can term.
    pub alpha: f64,
    pub max_depth: usize,
    pub min_leaf_examples: usize,
    pub shd_leaf_purity: f64,
    pub shd_neg_weight: f64,
    /// Cost per literal for the regularized precondition baseline.
    pub complexity_penalty: f64,
    /// Cost-complexity pruning of the can/should-not tree: cost per leaf as
    /// a fraction of the total training weight. 0 disables pruning.
    pub prune_cost: f64,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            max_depth: 6,
            min_leaf_examples: 5,
            shd_leaf_purity: 0.95,
            shd_neg_weight: 4.0,
            complexity_penalty: 0.01,
            prune_cost: 0.002,
            seed: 0,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if self.min_leaf_examples < 1 {
            return bad("min_leaf_examples must be at least 1");
        }
        if !(self.shd_leaf_purity > 0.5 && self.shd_leaf_purity <= 1.0) {
            return bad("shd_leaf_purity must be in (0.5, 1]");
        }
        if !(self.shd_neg_weight > 0.0 && self.shd_neg_weight.is_finite()) {
            return bad("shd_neg_weight must be positive");
        }
        if !(self.complexity_penalty >= 0.0 && self.complexity_penalty.is_finite()) {
            return bad("complexity_penalty must be non-negative");
        }
        if !(self.prune_cost >= 0.0 && self.prune_cost.is_finite()) {
            return bad("prune_cost must be non-negative");
        }
        Ok(())
    }

    fn tree_params(&self, act: usize) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_leaf_examples: self.min_leaf_examples,
            seed: self.seed ^ (act as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Shd,
    CanShdnt,
    Bc,
    CanRegularized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub act: usize,
    pub objective: ObjectiveKind,
    /// Value of the fitted objective on the training examples.
    pub objective_value: Option<f64>,
    pub train: ObjectiveReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held_out: Option<ObjectiveReport>,
    pub node_count: usize,
    pub leaf_purities: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FitReport {
    fn new(act: usize, objective: ObjectiveKind, train: ObjectiveReport, tree: Option<&DecisionTree>) -> Self {
        Self {
            act,
            objective,
            objective_value: None,
            train,
            held_out: None,
            node_count: tree.map_or(0, DecisionTree::node_count),
            leaf_purities: tree
                .map(|t| t.leaves().iter().map(|(_, l)| l.purity()).collect())
                .unwrap_or_default(),
            warnings: Vec::new(),
        }
    }

    fn no_positives(act: usize, objective: ObjectiveKind, dataset: &ExampleDataset) -> Self {
        let cond = DnfCondition::never();
        let mut report = Self::new(act, objective, evaluate_objectives(&cond, dataset, act), None);
        report
            .warnings
            .push(format!("act {act} has no positive examples; condition fixed to FALSE"));
        report
    }

    /// Scores the fitted condition on held-out examples.
    pub fn with_held_out(mut self, condition: &DnfCondition, held_out: &ExampleDataset) -> Self {
        self.held_out = Some(evaluate_objectives(condition, held_out, self.act));
        self
    }
}

fn check_inputs(dataset: &ExampleDataset, act: usize) -> Result<()> {
    if act >= dataset.n_acts() {
        return Err(Error::vocab(format!(
            "act index {act} out of range for vocabulary of {}",
            dataset.n_acts()
        )));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(())
}

struct ActData {
    rows: Vec<tree::LabeledRow>,
    n_pos: usize,
    n_neg: usize,
}

fn act_data(dataset: &ExampleDataset, act: usize) -> ActData {
    let rows = label_rows(dataset.examples_for_act(act), act);
    let n_pos = rows.iter().map(|r| r.n_pos).sum();
    let n_neg = rows.iter().map(|r| r.n_neg).sum();
    ActData { rows, n_pos, n_neg }
}

/// Should condition: fires only where the act was reliably performed.
pub fn fit_shd(dataset: &ExampleDataset, act: usize, cfg: &LearnConfig) -> Result<(DnfCondition, FitReport)> {
    check_inputs(dataset, act)?;
    let data = act_data(dataset, act);
    if data.n_pos == 0 {
        return Ok((DnfCondition::never(), FitReport::no_positives(act, ObjectiveKind::Shd, dataset)));
    }
    let weights = ClassWeights {
        positive: 1.0,
        negative: cfg.shd_neg_weight,
    };
    let tree = DecisionTree::fit(&data.rows, dataset.n_acts(), weights, cfg.tree_params(act));
    let cond = tree_to_dnf(&tree, LeafRule::Purity(cfg.shd_leaf_purity));
    let train = evaluate_objectives(&cond, dataset, act);
    let mut report = FitReport::new(act, ObjectiveKind::Shd, train, Some(&tree));
    report.objective_value = train.shd;
    Ok((cond, report))
}

/// Merged can / should-not condition.
pub fn fit_can_shdnt(
    dataset: &ExampleDataset,
    act: usize,
    cfg: &LearnConfig,
) -> Result<(DnfCondition, FitReport)> {
    check_inputs(dataset, act)?;
    let data = act_data(dataset, act);
    if data.n_pos == 0 {
        return Ok((
            DnfCondition::never(),
            FitReport::no_positives(act, ObjectiveKind::CanShdnt, dataset),
        ));
    }
    // positives weigh 1 and negatives alpha, the two terms of the objective
    let weights = ClassWeights {
        positive: 1.0,
        negative: cfg.alpha,
    };
    let mut tree = DecisionTree::fit(&data.rows, dataset.n_acts(), weights, cfg.tree_params(act));
    tree.prune(cfg.prune_cost);
    let mut cond = tree_to_dnf(&tree, LeafRule::PredictedClass);
    let mut train = evaluate_objectives(&cond, dataset, act);
    // Count weights can favour a constant that the conditional objective
    // scores lower than the other constant; never return worse than either.
    for constant in [DnfCondition::always(), DnfCondition::never()] {
        let r = evaluate_objectives(&constant, dataset, act);
        if r.can_shdnt(cfg.alpha) > train.can_shdnt(cfg.alpha) {
            cond = constant;
            train = r;
        }
    }
    let mut report = FitReport::new(act, ObjectiveKind::CanShdnt, train, Some(&tree));
    report.objective_value = train.can_shdnt(cfg.alpha);
    Ok((cond, report))
}

/// Behavioural cloning: fires iff the act is more often performed than not.
pub fn fit_bc(dataset: &ExampleDataset, act: usize, cfg: &LearnConfig) -> Result<(DnfCondition, FitReport)> {
    check_inputs(dataset, act)?;
    let data = act_data(dataset, act);
    if data.n_pos == 0 {
        return Ok((DnfCondition::never(), FitReport::no_positives(act, ObjectiveKind::Bc, dataset)));
    }
    let tree = DecisionTree::fit(&data.rows, dataset.n_acts(), ClassWeights::EQUAL, cfg.tree_params(act));
    let cond = tree_to_dnf(&tree, LeafRule::PredictedClass);
    let train = evaluate_objectives(&cond, dataset, act);
    let mut report = FitReport::new(act, ObjectiveKind::Bc, train, Some(&tree));
    report.objective_value = train.bc;
    Ok((cond, report))
}

/// Precondition-only baseline: maximizes `P(f=1 | a=1) - penalty * literals`
/// over greedy prunings of a class-balanced tree.
///
/// With a zero penalty the objective is maximized by the constant `TRUE`
/// condition, which is returned directly. `TRUE` is also returned when no
/// pruning scores above zero, i.e. when literals cost more than they explain.
pub fn fit_can_regularized(
    dataset: &ExampleDataset,
    act: usize,
    cfg: &LearnConfig,
) -> Result<(DnfCondition, FitReport)> {
    check_inputs(dataset, act)?;
    let data = act_data(dataset, act);
    if data.n_pos == 0 {
        return Ok((
            DnfCondition::never(),
            FitReport::no_positives(act, ObjectiveKind::CanRegularized, dataset),
        ));
    }
    let penalty = cfg.complexity_penalty;
    let score = |cond: &DnfCondition| {
        evaluate_objectives(cond, dataset, act).can.unwrap_or(0.0) - penalty * cond.literal_count() as f64
    };

    let weights = ClassWeights {
        positive: 1.0 / data.n_pos.max(1) as f64,
        negative: 1.0 / data.n_neg.max(1) as f64,
    };
    let mut tree = DecisionTree::fit(&data.rows, dataset.n_acts(), weights, cfg.tree_params(act));
    let mut cond = tree_to_dnf(&tree, LeafRule::PredictedClass);
    let mut best = score(&cond);
    loop {
        let mut improved = None;
        for id in tree.internal_nodes() {
            let candidate = tree.collapsed(id);
            let c = tree_to_dnf(&candidate, LeafRule::PredictedClass);
            let s = score(&c);
            // >= so that equally scoring simpler trees win
            if s >= best && improved.as_ref().is_none_or(|(bs, _, _)| s > *bs) {
                improved = Some((s, candidate, c));
            }
        }
        match improved {
            Some((s, t, c)) => {
                best = s;
                tree = t;
                cond = c;
            }
            None => break,
        }
    }
    if penalty == 0.0 || best <= 0.0 {
        cond = DnfCondition::always();
    }
    let train = evaluate_objectives(&cond, dataset, act);
    let mut report = FitReport::new(act, ObjectiveKind::CanRegularized, train, Some(&tree));
    report.objective_value = Some(train.can.unwrap_or(0.0) - penalty * cond.literal_count() as f64);
    Ok((cond, report))
}

/// Which inference algorithm builds a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphMethod {
    /// Merged can/should-not plus should conditions.
    Todflow,
    /// Merged can/should-not only; should conditions left empty.
    TodflowNoShd,
    /// Behavioural cloning used as the can/should-not condition.
    Bc,
    /// Regularized precondition baseline.
    CanReg,
}

impl GraphMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            GraphMethod::Todflow => "todflow",
            GraphMethod::TodflowNoShd => "todflow-no-shd",
            GraphMethod::Bc => "bc",
            GraphMethod::CanReg => "can-reg",
        }
    }
}

impl FromStr for GraphMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "todflow" => Ok(GraphMethod::Todflow),
            "todflow-no-shd" => Ok(GraphMethod::TodflowNoShd),
            "bc" => Ok(GraphMethod::Bc),
            "can-reg" | "canreg" => Ok(GraphMethod::CanReg),
            other => Err(Error::Config(format!("unknown graph method `{other}`"))),
        }
    }
}

/// Fits every executed act of the dataset and assembles a graph. Acts never
/// executed keep the default entry (always allowed, never required).
///
/// Acts are fitted in parallel; the result does not depend on thread count.
pub fn infer_graph(
    dataset: &ExampleDataset,
    domain: &str,
    method: GraphMethod,
    cfg: &LearnConfig,
) -> Result<(TodFlowGraph, Vec<FitReport>)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let acts: Vec<usize> = dataset.executed_acts().iter().collect();
    let fitted: Vec<(usize, ActConditions, Vec<FitReport>)> = acts
        .par_iter()
        .map(|&act| fit_act(dataset, act, method, cfg).map(|(e, r)| (act, e, r)))
        .collect::<Result<_>>()?;

    let mut graph = TodFlowGraph::new(domain, dataset.vocabulary.clone());
    let mut reports = Vec::new();
    for (act, entry, rs) in fitted {
        graph.set_entry(act, entry)?;
        reports.extend(rs);
    }
    graph.set_metadata(GraphMetadata {
        objective: Some(method.as_str().to_string()),
        learn_config: Some(*cfg),
        corpus_fingerprint: Some(dataset.fingerprint()),
        ..GraphMetadata::default()
    });
    Ok((graph, reports))
}

fn fit_act(
    dataset: &ExampleDataset,
    act: usize,
    method: GraphMethod,
    cfg: &LearnConfig,
) -> Result<(ActConditions, Vec<FitReport>)> {
    Ok(match method {
        GraphMethod::Todflow => {
            let (can_shdnt, r1) = fit_can_shdnt(dataset, act, cfg)?;
            let (shd, r2) = fit_shd(dataset, act, cfg)?;
            (
                ActConditions {
                    can_shdnt,
                    shd,
                    can_only: None,
                },
                vec![r1, r2],
            )
        }
        GraphMethod::TodflowNoShd => {
            let (can_shdnt, r) = fit_can_shdnt(dataset, act, cfg)?;
            (
                ActConditions {
                    can_shdnt,
                    ..ActConditions::default()
                },
                vec![r],
            )
        }
        GraphMethod::Bc => {
            let (can_shdnt, r) = fit_bc(dataset, act, cfg)?;
            (
                ActConditions {
                    can_shdnt,
                    ..ActConditions::default()
                },
                vec![r],
            )
        }
        GraphMethod::CanReg => {
            let (can, r) = fit_can_regularized(dataset, act, cfg)?;
            (
                ActConditions {
                    can_shdnt: can.clone(),
                    shd: DnfCondition::never(),
                    can_only: Some(can),
                },
                vec![r],
            )
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        LearnConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cases = [
            LearnConfig {
                alpha: 0.0,
                ..LearnConfig::default()
            },
            LearnConfig {
                max_depth: 0,
                ..LearnConfig::default()
            },
            LearnConfig {
                shd_leaf_purity: 0.5,
                ..LearnConfig::default()
            },
            LearnConfig {
                complexity_penalty: -1.0,
                ..LearnConfig::default()
            },
        ];
        for cfg in cases {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            GraphMethod::Todflow,
            GraphMethod::TodflowNoShd,
            GraphMethod::Bc,
            GraphMethod::CanReg,
        ] {
            assert_eq!(m.as_str().parse::<GraphMethod>().unwrap(), m);
        }
    }
}
