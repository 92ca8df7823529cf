//! Benchmark loop: infer graphs on the train split of each domain, then for
//! every test turn draw `k` candidates once and score every
//! `(graph method, ranking strategy)` cell against the gold acts.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::f1_turn;
use super::recovery::graph_recovery_score;
use crate::condition::{rank_and_select_scoped, turn_key, RankingStrategy};
use crate::error::{Error, Result};
use crate::graph::TodFlowGraph;
use crate::ingest::{build_examples, parse_trajectories, split_by_hash, CorpusFile, CorpusFormat, Target};
use crate::learn::{infer_graph, GraphMethod, LearnConfig};
use crate::providers::{
    CandidateProvider, ExternalProvider, NoisyOracleConfig, NoisyOracleProvider, ProviderMode, ProviderRequest,
    ReplayProvider,
};
use crate::synth::{reachable_completions, synthesize, SynthConfig, REACHABILITY_LIMIT};
use crate::types::{ActVocabulary, ActionSet, Speaker, Trajectory};

pub const BASELINE_METHOD: &str = "no-graph";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderSpec {
    Oracle(NoisyOracleConfig),
    Replay {
        path: PathBuf,
    },
    External {
        command: Vec<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl ProviderSpec {
    /// Instantiates the provider. The oracle draws its gold sets from
    /// `trajectories`.
    pub fn build(
        &self,
        vocab: &ActVocabulary,
        trajectories: &[Trajectory],
        target: Target,
    ) -> Result<Box<dyn CandidateProvider>> {
        Ok(match self {
            ProviderSpec::Oracle(o) => Box::new(NoisyOracleProvider::from_trajectories(*o, vocab, trajectories, target)?),
            ProviderSpec::Replay { path } => Box::new(ReplayProvider::load(path, vocab)?),
            ProviderSpec::External { command, timeout_ms } => Box::new(ExternalProvider::spawn(
                command,
                Duration::from_millis(*timeout_ms),
                vocab.clone(),
            )?),
        })
    }
}

impl Default for ProviderSpec {
    fn default() -> Self {
        ProviderSpec::Oracle(NoisyOracleConfig::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<CorpusFormat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Synthetic domains, each generated from its own config.
    pub synth: Vec<SynthConfig>,
    /// A real corpus, split into domains by `domain` field.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<CorpusSpec>,
    pub methods: Vec<GraphMethod>,
    pub strategies: Vec<String>,
    pub provider: ProviderSpec,
    pub k: usize,
    pub learn: LearnConfig,
    pub target: Target,
    pub split_ratio: f64,
    pub split_seed: u64,
    /// Seed of the uniform ranking strategy.
    pub strategy_seed: u64,
    /// Fraction of turns whose provider call may fail before aborting.
    pub max_failure_rate: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            synth: Vec::new(),
            corpus: None,
            methods: vec![GraphMethod::Todflow, GraphMethod::Bc, GraphMethod::CanReg],
            strategies: RankingStrategy::NAMES.iter().map(|s| s.to_string()).collect(),
            provider: ProviderSpec::default(),
            k: 10,
            learn: LearnConfig::default(),
            target: Target::System,
            split_ratio: 0.9,
            split_seed: 0,
            strategy_seed: 0,
            max_failure_rate: 0.01,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.synth.is_empty() && self.corpus.is_none() {
            return Err(Error::Config("benchmark needs `synth` domains or a `corpus`".into()));
        }
        if self.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.methods.is_empty() || self.strategies.is_empty() {
            return Err(Error::Config("benchmark needs at least one method and one strategy".into()));
        }
        for s in &self.strategies {
            RankingStrategy::parse(s, 0)?;
        }
        for s in &self.synth {
            s.validate()?;
        }
        self.learn.validate()?;
        if let ProviderSpec::Oracle(o) = &self.provider {
            o.validate()?;
        }
        if !(0.0..=1.0).contains(&self.split_ratio) {
            return Err(Error::Config(format!("split_ratio {} outside [0, 1]", self.split_ratio)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub method: String,
    pub strategy: String,
    /// Per domain: mean over turns. Aggregate: unweighted mean of domain means.
    pub macro_f1: f64,
    /// Mean over every scored turn.
    pub micro_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRecovery {
    pub method: String,
    pub can_shdnt_rate: f64,
    pub can_shdnt_rate_full: f64,
    pub shd_rate: f64,
    pub sampled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub domain: String,
    pub n_train: usize,
    pub n_test: usize,
    pub n_turns: usize,
    pub skipped_turns: usize,
    pub baseline: CellScore,
    pub cells: Vec<CellScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub recovery: Vec<MethodRecovery>,
}

/// A cell scoring below the no-graph greedy baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    /// `None` for the cross-domain aggregate.
    pub domain: Option<String>,
    pub method: String,
    pub strategy: String,
    pub f1: f64,
    pub baseline_f1: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RuntimeStats {
    pub total: Duration,
    pub per_domain: BTreeMap<String, Duration>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchConfig,
    pub domains: Vec<DomainReport>,
    pub baseline: CellScore,
    pub cells: Vec<CellScore>,
    pub regressions: Vec<Regression>,
    /// Wall-clock figures; kept out of the serialized report so identical
    /// runs produce identical bytes.
    #[serde(skip)]
    pub runtime: RuntimeStats,
}

impl BenchmarkReport {
    pub fn cell(&self, method: &str, strategy: &str) -> Option<&CellScore> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.strategy == strategy)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }

    /// Macro F1 (x100) with methods as rows and strategies as columns.
    pub fn to_table(&self) -> String {
        let strategies = &self.config.strategies;
        let width = self
            .cells
            .iter()
            .map(|c| c.method.len())
            .chain([BASELINE_METHOD.len(), 6])
            .max()
            .unwrap_or(8);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "method");
        for s in strategies {
            let _ = write!(out, "  {s:>10}");
        }
        out.push('\n');
        let _ = write!(out, "{BASELINE_METHOD:<width$}");
        for s in strategies {
            if s == "greedy" {
                let _ = write!(out, "  {:>10.1}", 100.0 * self.baseline.macro_f1);
            } else {
                let _ = write!(out, "  {:>10}", "-");
            }
        }
        out.push('\n');
        for m in &self.config.methods {
            let _ = write!(out, "{:<width$}", m.as_str());
            for s in strategies {
                match self.cell(m.as_str(), s) {
                    Some(c) => {
                        let _ = write!(out, "  {:>10.1}", 100.0 * c.macro_f1);
                    }
                    None => {
                        let _ = write!(out, "  {:>10}", "-");
                    }
                }
            }
            out.push('\n');
        }
        if !self.regressions.is_empty() {
            out.push_str("\nbelow no-graph greedy:\n");
            for r in &self.regressions {
                let _ = writeln!(
                    out,
                    "  {} {} / {}: {:.1} < {:.1}",
                    r.domain.as_deref().unwrap_or("(all)"),
                    r.method,
                    r.strategy,
                    100.0 * r.f1,
                    100.0 * r.baseline_f1
                );
            }
        }
        out
    }
}

struct DomainInput {
    name: String,
    trajectories: Vec<Trajectory>,
    vocab: ActVocabulary,
    truth: Option<TodFlowGraph>,
    max_turns: usize,
}

struct DomainOutcome {
    report: DomainReport,
    /// (cell key, per-turn F1) including the baseline under `BASELINE_METHOD`.
    turn_f1: BTreeMap<(String, String), Vec<f64>>,
    elapsed: Duration,
}

fn load_domains(cfg: &BenchConfig) -> Result<Vec<DomainInput>> {
    let mut domains = Vec::new();
    for s in &cfg.synth {
        let dom = synthesize(s)?;
        domains.push(DomainInput {
            name: s.domain.clone(),
            vocab: dom.truth_graph.vocabulary().clone(),
            trajectories: dom.trajectories(),
            truth: Some(dom.truth_graph),
            max_turns: s.max_turns,
        });
    }
    if let Some(corpus) = &cfg.corpus {
        let mut file = CorpusFile::new(&corpus.path);
        file.format = corpus.format;
        let mut by_domain: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
        for t in parse_trajectories(&file)? {
            by_domain.entry(t.domain.clone()).or_default().push(t);
        }
        for (name, trajectories) in by_domain {
            domains.push(DomainInput {
                vocab: ActVocabulary::from_trajectories(&trajectories)?,
                name,
                trajectories,
                truth: None,
                max_turns: 0,
            });
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for d in &domains {
        if !seen.insert(d.name.as_str()) {
            return Err(Error::Config(format!("duplicate domain name `{}`", d.name)));
        }
    }
    Ok(domains)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn run_domain(cfg: &BenchConfig, input: DomainInput) -> Result<DomainOutcome> {
    let start = Instant::now();
    let (train, test) = split_by_hash(&input.trajectories, cfg.split_ratio, cfg.split_seed)?;
    let train_ds = build_examples(&train, &input.vocab, cfg.target)?;
    if train_ds.is_empty() {
        return Err(Error::Benchmark(format!("domain `{}` has no training turns", input.name)));
    }
    let test_ds = build_examples(&test, &input.vocab, cfg.target)?;

    let graphs = cfg
        .methods
        .iter()
        .map(|&m| infer_graph(&train_ds, &input.name, m, &cfg.learn).map(|(g, _)| (m, g)))
        .collect::<Result<Vec<_>>>()?;
    let strategies = cfg
        .strategies
        .iter()
        .map(|s| RankingStrategy::parse(s, cfg.strategy_seed))
        .collect::<Result<Vec<_>>>()?;
    let scopes: HashMap<Speaker, ActionSet> = [Speaker::User, Speaker::System]
        .into_iter()
        .map(|s| (s, train_ds.acts_of(s)))
        .collect();

    let mut provider = cfg.provider.build(&input.vocab, &test, cfg.target)?;
    let by_id: HashMap<&str, &Trajectory> = test.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut turn_f1: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let baseline_key = (BASELINE_METHOD.to_string(), "greedy".to_string());
    let mut skipped = 0;

    for ex in &test_ds.examples {
        let traj = by_id[ex.trajectory_id.as_str()];
        let request = ProviderRequest {
            domain: input.name.clone(),
            trajectory_id: ex.trajectory_id.clone(),
            turn_index: ex.turn_index,
            history: traj.turns[..ex.turn_index].to_vec(),
            completion: ex.completion.clone(),
            k: cfg.k,
            mode: ProviderMode::Acts,
        };
        let candidates = match provider.candidates(&request) {
            Ok(reply) if !reply.is_empty() => reply.to_candidates(),
            Ok(_) => {
                log::warn!("{}: empty reply for {} turn {}", input.name, ex.trajectory_id, ex.turn_index);
                skipped += 1;
                continue;
            }
            Err(e) => {
                log::warn!("{}: provider failed on {} turn {}: {e}", input.name, ex.trajectory_id, ex.turn_index);
                skipped += 1;
                continue;
            }
        };
        turn_f1
            .entry(baseline_key.clone())
            .or_default()
            .push(f1_turn(&candidates[0].acts, &ex.action).f1);
        let key = turn_key(&ex.trajectory_id, ex.turn_index);
        for (method, graph) in &graphs {
            for strategy in &strategies {
                let (acts, _) = rank_and_select_scoped(
                    graph,
                    &ex.completion,
                    &candidates,
                    strategy.for_turn(key),
                    scopes.get(&ex.speaker),
                )?;
                turn_f1
                    .entry((method.as_str().to_string(), strategy.name().to_string()))
                    .or_default()
                    .push(f1_turn(&acts, &ex.action).f1);
            }
        }
    }

    let n_turns = test_ds.len();
    if n_turns > 0 && skipped as f64 > cfg.max_failure_rate * n_turns as f64 {
        return Err(Error::Benchmark(format!(
            "provider failed on {skipped} of {n_turns} turns in domain `{}`",
            input.name
        )));
    }
    if turn_f1.is_empty() {
        return Err(Error::Benchmark(format!("domain `{}` has no scored test turns", input.name)));
    }

    let cell = |method: &str, strategy: &str| {
        let f = &turn_f1[&(method.to_string(), strategy.to_string())];
        CellScore {
            method: method.to_string(),
            strategy: strategy.to_string(),
            macro_f1: mean(f),
            micro_f1: mean(f),
        }
    };
    let cells = graphs
        .iter()
        .flat_map(|(m, _)| strategies.iter().map(|s| cell(m.as_str(), s.name())))
        .collect();

    let mut recovery = Vec::new();
    if let Some(truth) = &input.truth {
        let reach = if truth.n_acts() <= REACHABILITY_LIMIT {
            Some(reachable_completions(truth, input.max_turns)?)
        } else {
            None
        };
        for (m, g) in &graphs {
            let r = graph_recovery_score(g, truth, reach.as_ref(), None)?;
            recovery.push(MethodRecovery {
                method: m.as_str().to_string(),
                can_shdnt_rate: r.can_shdnt_rate,
                can_shdnt_rate_full: r.can_shdnt_rate_full,
                shd_rate: r.shd_rate,
                sampled: r.sampled,
            });
        }
    }

    Ok(DomainOutcome {
        report: DomainReport {
            domain: input.name.clone(),
            n_train: train.len(),
            n_test: test.len(),
            n_turns,
            skipped_turns: skipped,
            baseline: cell(BASELINE_METHOD, "greedy"),
            cells,
            recovery,
        },
        turn_f1,
        elapsed: start.elapsed(),
    })
}

/// Runs every domain (in parallel) and assembles the report in domain order.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let start = Instant::now();
    let domains = load_domains(cfg)?;
    let outcomes = domains
        .into_par_iter()
        .map(|d| run_domain(cfg, d))
        .collect::<Result<Vec<_>>>()?;

    let mut pooled: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for o in &outcomes {
        for (k, v) in &o.turn_f1 {
            pooled.entry(k.clone()).or_default().extend(v);
        }
    }
    let aggregate = |method: &str, strategy: &str| {
        let domain_means: Vec<f64> = outcomes
            .iter()
            .filter_map(|o| {
                o.turn_f1
                    .get(&(method.to_string(), strategy.to_string()))
                    .map(|f| mean(f))
            })
            .collect();
        CellScore {
            method: method.to_string(),
            strategy: strategy.to_string(),
            macro_f1: mean(&domain_means),
            micro_f1: mean(
                pooled
                    .get(&(method.to_string(), strategy.to_string()))
                    .map(Vec::as_slice)
                    .unwrap_or(&[]),
            ),
        }
    };
    let baseline = aggregate(BASELINE_METHOD, "greedy");
    let mut cells = Vec::new();
    for m in &cfg.methods {
        for s in &cfg.strategies {
            cells.push(aggregate(m.as_str(), s));
        }
    }

    let mut regressions = Vec::new();
    for o in &outcomes {
        for c in &o.report.cells {
            if c.macro_f1 < o.report.baseline.macro_f1 {
                regressions.push(Regression {
                    domain: Some(o.report.domain.clone()),
                    method: c.method.clone(),
                    strategy: c.strategy.clone(),
                    f1: c.macro_f1,
                    baseline_f1: o.report.baseline.macro_f1,
                });
            }
        }
    }
    for c in &cells {
        if c.macro_f1 < baseline.macro_f1 {
            regressions.push(Regression {
                domain: None,
                method: c.method.clone(),
                strategy: c.strategy.clone(),
                f1: c.macro_f1,
                baseline_f1: baseline.macro_f1,
            });
        }
    }

    let runtime = RuntimeStats {
        total: start.elapsed(),
        per_domain: outcomes
            .iter()
            .map(|o| (o.report.domain.clone(), o.elapsed))
            .collect(),
    };
    Ok(BenchmarkReport {
        config: cfg.clone(),
        domains: outcomes.into_iter().map(|o| o.report).collect(),
        baseline,
        cells,
        regressions,
        runtime,
    })
}
