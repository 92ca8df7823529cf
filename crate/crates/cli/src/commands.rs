use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use todflow::condition::{rank_and_select_scoped, turn_key, RankingStrategy};
use todflow::eval::{f1_turn, run_benchmark, summarize, BenchConfig, ProviderSpec};
use todflow::graph::{self, ConditionTarget, DotOptions};
use todflow::ingest::{build_examples, parse_trajectories, split_by_hash, write_jsonl, CorpusFile, Target};
use todflow::learn::{FitReport, ObjectiveKind};
use todflow::providers::{NoisyOracleConfig, ProviderMode, ProviderRequest};
use todflow::synth::{acts_of_role, synthesize, SynthConfig};
use todflow::{infer_graph, ActVocabulary, ActionSet, GraphMethod, LearnConfig, Speaker, TodFlowGraph, Trajectory};

use crate::args::{
    probability, require, BenchArgs, ConditionArgs, CorpusArgs, EditArgs, EvalArgs, ExportArgs, InferArgs, Merge,
    PresetArg, ProviderKind, SpeakerArg, SplitPart, SynthArgs,
};
use crate::{edit_script, read_file, write_file, CliError, CliResult};

const DEFAULT_SPLIT_RATIO: f64 = 0.9;

fn load_corpus(args: &CorpusArgs) -> CliResult<Vec<Trajectory>> {
    let path = require(args.data.clone(), "--data")?;
    let mut file = CorpusFile::new(path);
    file.format = args.format;
    Ok(parse_trajectories(&file)?)
}

/// Picks the trajectories of one domain: the requested one, the only one, or
/// `fallback` when the corpus has several.
fn select_domain(
    trajectories: Vec<Trajectory>,
    requested: Option<&str>,
    fallback: Option<&str>,
) -> CliResult<(String, Vec<Trajectory>)> {
    let domains: BTreeSet<&str> = trajectories.iter().map(|t| t.domain.as_str()).collect();
    let name = match requested {
        Some(d) if domains.contains(d) => d.to_string(),
        Some(d) => {
            return Err(CliError::Core(todflow::Error::Config(format!(
                "domain `{d}` not in corpus (found: {})",
                domains.iter().copied().collect::<Vec<_>>().join(", ")
            ))))
        }
        None if domains.len() == 1 => domains.iter().next().expect("one domain").to_string(),
        None => match fallback.filter(|f| domains.contains(f)) {
            Some(f) => f.to_string(),
            None => {
                return Err(CliError::Core(todflow::Error::Config(format!(
                    "corpus has {} domains ({}); choose one with --domain",
                    domains.len(),
                    domains.iter().copied().collect::<Vec<_>>().join(", ")
                ))))
            }
        },
    };
    let selected = trajectories.into_iter().filter(|t| t.domain == name).collect();
    Ok((name, selected))
}

fn load_graph(path: &Path) -> CliResult<TodFlowGraph> {
    Ok(graph::deserialize(&read_file(path)?)?)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data always serializes");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// infer

fn learn_config(a: &InferArgs) -> LearnConfig {
    let d = LearnConfig::default();
    LearnConfig {
        alpha: a.alpha.unwrap_or(d.alpha),
        max_depth: a.max_depth.unwrap_or(d.max_depth),
        min_leaf_examples: a.min_leaf.unwrap_or(d.min_leaf_examples),
        shd_leaf_purity: a.shd_purity.unwrap_or(d.shd_leaf_purity),
        shd_neg_weight: a.shd_neg_weight.unwrap_or(d.shd_neg_weight),
        complexity_penalty: a.penalty.unwrap_or(d.complexity_penalty),
        prune_cost: a.prune_cost.unwrap_or(d.prune_cost),
        seed: a.seed.unwrap_or(d.seed),
    }
}

fn fitted_condition(graph: &TodFlowGraph, report: &FitReport) -> Option<todflow::DnfCondition> {
    let target = match report.objective {
        ObjectiveKind::Shd => ConditionTarget::Shd,
        _ => ConditionTarget::CanShdnt,
    };
    graph.condition(report.act, target).cloned()
}

pub fn infer(args: InferArgs) -> CliResult<()> {
    let args = args.with_config()?;
    args.corpus.validate()?;
    let cfg = learn_config(&args);
    cfg.validate()?;
    let out = require(args.out.clone(), "--out")?;
    let method = args.method.unwrap_or(GraphMethod::Todflow);
    let target = args.corpus.target.unwrap_or(Target::System);

    let (domain, trajectories) = select_domain(load_corpus(&args.corpus)?, args.corpus.domain.as_deref(), None)?;
    let vocab = ActVocabulary::from_trajectories(&trajectories)?;
    let (train, test) = split_by_hash(
        &trajectories,
        args.corpus.split_ratio.unwrap_or(DEFAULT_SPLIT_RATIO),
        args.corpus.split_seed.unwrap_or(0),
    )?;
    let train_ds = build_examples(&train, &vocab, target)?;
    let (graph, reports) = infer_graph(&train_ds, &domain, method, &cfg)?;
    log::info!(
        "{domain}: fitted {} acts on {} examples from {} trajectories",
        reports.len(),
        train_ds.len(),
        train.len()
    );
    write_file(&out, &graph::serialize(&graph))?;

    if let Some(path) = &args.report {
        let test_ds = build_examples(&test, &vocab, target)?;
        let reports: Vec<FitReport> = if test_ds.is_empty() {
            reports
        } else {
            reports
                .into_iter()
                .map(|r| match fitted_condition(&graph, &r) {
                    Some(cond) => r.with_held_out(&cond, &test_ds),
                    None => r,
                })
                .collect()
        };
        write_file(path, &to_json(&reports))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// condition

#[derive(Serialize)]
struct AddedRecord<'a> {
    act: &'a str,
    /// The should clause that fired.
    clause: String,
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    domain: &'a str,
    traj: &'a str,
    turn: usize,
    speaker: Speaker,
    strategy: &'a str,
    predicted: Vec<&'a str>,
    chosen_rank: usize,
    n_candidates: usize,
    added: Vec<AddedRecord<'a>>,
    removed: Vec<&'a str>,
}

fn provider_spec(a: &ConditionArgs) -> CliResult<ProviderSpec> {
    Ok(match a.provider.unwrap_or(ProviderKind::Oracle) {
        ProviderKind::Oracle => {
            let d = NoisyOracleConfig::default();
            ProviderSpec::Oracle(NoisyOracleConfig {
                dropout_p: a.dropout.unwrap_or(d.dropout_p),
                spurious_p: a.spurious.unwrap_or(d.spurious_p),
                seed: a.provider_seed.unwrap_or(d.seed),
                ..d
            })
        }
        ProviderKind::Replay => ProviderSpec::Replay {
            path: require(a.replay.clone(), "--replay")?,
        },
        ProviderKind::External => {
            let line = require(a.command.clone(), "--command")?;
            let command = shell_words::split(&line).map_err(|e| CliError::Usage(format!("--command: {e}")))?;
            if command.is_empty() {
                return Err(CliError::Usage("--command is empty".into()));
            }
            ProviderSpec::External {
                command,
                timeout_ms: a.timeout_ms.unwrap_or(30_000),
            }
        }
    })
}

/// Acts a speaker may be credited with, from the `USER ` / `SYSTEM ` label
/// prefixes; `None` when the vocabulary does not use them.
fn speaker_scope(vocab: &ActVocabulary, speaker: Speaker) -> Option<ActionSet> {
    let acts = acts_of_role(vocab, speaker);
    (!acts.is_empty()).then_some(acts)
}

pub fn condition(args: ConditionArgs) -> CliResult<()> {
    let args = args.with_config()?;
    args.corpus.validate()?;
    probability(args.dropout, "--dropout")?;
    probability(args.spurious, "--spurious")?;
    let k = args.k.unwrap_or(10);
    if k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let strategy = RankingStrategy::parse(args.strategy.as_deref().unwrap_or("compliance"), args.seed.unwrap_or(0))?;
    let spec = provider_spec(&args)?;
    if let ProviderSpec::Oracle(o) = &spec {
        o.validate()?;
    }
    let graph_path = require(args.graph.clone(), "--graph")?;
    let out = require(args.out.clone(), "--out")?;
    let target = args.corpus.target.unwrap_or(Target::System);

    let graph = load_graph(&graph_path)?;
    let (domain, trajectories) = select_domain(
        load_corpus(&args.corpus)?,
        args.corpus.domain.as_deref(),
        Some(graph.domain()),
    )?;
    let (train, test) = split_by_hash(
        &trajectories,
        args.corpus.split_ratio.unwrap_or(DEFAULT_SPLIT_RATIO),
        args.corpus.split_seed.unwrap_or(0),
    )?;
    let selected = match args.split.unwrap_or(SplitPart::Test) {
        SplitPart::Train => train,
        SplitPart::Test => test,
        SplitPart::All => trajectories,
    };
    let vocab = graph.vocabulary();
    let dataset = build_examples(&selected, vocab, target)?;
    if dataset.is_empty() {
        return Err(CliError::Core(todflow::Error::NoTurns));
    }
    let scopes: HashMap<Speaker, Option<ActionSet>> = [Speaker::User, Speaker::System]
        .into_iter()
        .map(|s| (s, speaker_scope(vocab, s)))
        .collect();

    let mut provider = spec.build(vocab, &selected, target)?;
    let by_id: HashMap<&str, &Trajectory> = selected.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut lines = String::new();
    for ex in &dataset.examples {
        let traj = by_id[ex.trajectory_id.as_str()];
        let request = ProviderRequest {
            domain: domain.clone(),
            trajectory_id: ex.trajectory_id.clone(),
            turn_index: ex.turn_index,
            history: traj.turns[..ex.turn_index].to_vec(),
            completion: ex.completion.clone(),
            k,
            mode: ProviderMode::Acts,
        };
        let at = |message: String| CliError::Turn {
            traj: ex.trajectory_id.clone(),
            turn: ex.turn_index,
            message,
        };
        let reply = provider.candidates(&request).map_err(|e| at(format!("provider failed: {e}")))?;
        let candidates = reply.to_candidates();
        if candidates.is_empty() {
            return Err(at("provider returned no candidates".into()));
        }
        let scope = scopes.get(&ex.speaker).and_then(Option::as_ref);
        let (acts, audit) = rank_and_select_scoped(
            &graph,
            &ex.completion,
            &candidates,
            strategy.for_turn(turn_key(&ex.trajectory_id, ex.turn_index)),
            scope,
        )?;
        let label = |i: usize| vocab.label(i).unwrap_or("?");
        let record = PredictionRecord {
            domain: &domain,
            traj: &ex.trajectory_id,
            turn: ex.turn_index,
            speaker: ex.speaker,
            strategy: strategy.name(),
            predicted: acts.iter().map(label).collect(),
            chosen_rank: audit.chosen_rank,
            n_candidates: candidates.len(),
            added: audit
                .added
                .iter()
                .map(|a| AddedRecord {
                    act: label(a.act),
                    clause: a.clause.display(vocab).to_string(),
                })
                .collect(),
            removed: audit.removed.iter().map(label).collect(),
        };
        lines.push_str(&serde_json::to_string(&record).expect("record serializes"));
        lines.push('\n');
    }
    write_file(&out, &lines)
}

// ---------------------------------------------------------------------------
// eval

#[derive(Deserialize)]
struct PredictionLine {
    traj: String,
    turn: usize,
    predicted: Vec<String>,
}

#[derive(Serialize)]
struct EvalReport {
    headline: &'static str,
    macro_f1: f64,
    micro_f1: f64,
    mean_precision: f64,
    mean_recall: f64,
    n_turns: usize,
    domains: BTreeMap<String, todflow::eval::metrics::DomainScore>,
}

pub fn eval(args: EvalArgs) -> CliResult<()> {
    let args = args.with_config()?;
    let pred_path = require(args.pred.clone(), "--pred")?;
    let gold_path = require(args.gold.clone(), "--gold")?;

    let mut file = CorpusFile::new(&gold_path);
    file.format = args.format;
    let gold = parse_trajectories(&file)?;
    let mut vocab = ActVocabulary::from_trajectories(&gold)?;
    let turns: HashMap<(&str, usize), (&str, &Vec<String>)> = gold
        .iter()
        .flat_map(|t| {
            t.turns
                .iter()
                .enumerate()
                .map(move |(i, turn)| ((t.id.as_str(), i), (t.domain.as_str(), &turn.acts)))
        })
        .collect();

    let text = read_file(&pred_path)?;
    let mut scored: Vec<(&str, f64)> = Vec::new();
    let (mut p_sum, mut r_sum) = (0.0, 0.0);
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pred: PredictionLine = serde_json::from_str(line).map_err(|e| {
            CliError::Core(todflow::Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })
        })?;
        let &(domain, gold_acts) = turns.get(&(pred.traj.as_str(), pred.turn)).ok_or_else(|| {
            CliError::Core(todflow::Error::Schema {
                line: n + 1,
                field: format!("traj/turn ({} turn {} not in gold corpus)", pred.traj, pred.turn),
            })
        })?;
        for l in &pred.predicted {
            vocab.insert(l)?;
        }
        let predicted = ActionSet::from_labels(&vocab, &pred.predicted)?;
        let gold_set = ActionSet::from_labels(&vocab, gold_acts)?;
        let s = f1_turn(&predicted, &gold_set);
        p_sum += s.precision;
        r_sum += s.recall;
        scored.push((domain, s.f1));
    }
    let summary = summarize(scored.iter().copied())?;
    let n = scored.len() as f64;
    let report = EvalReport {
        headline: if args.micro { "micro" } else { "macro" },
        macro_f1: summary.macro_f1,
        micro_f1: summary.micro_f1,
        mean_precision: p_sum / n,
        mean_recall: r_sum / n,
        n_turns: scored.len(),
        domains: summary.domains,
    };

    for (d, s) in &report.domains {
        println!("{d:<24} {:>6} turns  F1 {:.2}", s.n_turns, 100.0 * s.mean_f1);
    }
    let headline = if args.micro { report.micro_f1 } else { report.macro_f1 };
    println!("{} F1 {:.2}", report.headline, 100.0 * headline);
    if let Some(out) = &args.out {
        write_file(out, &to_json(&report))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// export

pub fn export(args: ExportArgs) -> CliResult<()> {
    let args = args.with_config()?;
    let graph_path = require(args.graph.clone(), "the graph path")?;
    let graph = load_graph(&graph_path)?;
    let acts = args.speaker.map(|s| {
        let speaker = match s {
            SpeakerArg::User => Speaker::User,
            SpeakerArg::System => Speaker::System,
        };
        acts_of_role(graph.vocabulary(), speaker)
    });
    let opts = DotOptions {
        include_shd: !args.no_shd,
        include_negative_edges: !args.no_negative,
        acts,
    };
    let dot = graph::to_dot(&graph, &opts);
    match &args.dot {
        Some(path) => write_file(path, &dot),
        None => {
            print!("{dot}");
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// synth

pub fn synth(args: SynthArgs) -> CliResult<()> {
    probability(args.noise, "--noise")?;
    let mut cfg = match (&args.config, args.preset) {
        (Some(path), _) => serde_json::from_str::<SynthConfig>(&read_file(path)?)
            .map_err(|e| CliError::Core(todflow::Error::Config(format!("{}: {e}", path.display()))))?,
        (None, Some(PresetArg::RentalCars)) => SynthConfig::rental_cars(),
        (None, None) => SynthConfig::default(),
    };
    if args.config.is_some() && args.preset == Some(PresetArg::RentalCars) {
        cfg.preset = Some(todflow::synth::Preset::RentalCars);
    }
    if let Some(v) = &args.domain {
        cfg.domain = v.clone();
    }
    if let Some(v) = args.n_acts {
        cfg.n_acts = v;
    }
    if let Some(v) = args.n_trajectories {
        cfg.n_trajectories = v;
    }
    if let Some(v) = args.max_turns {
        cfg.max_turns = v;
    }
    if let Some(v) = args.noise {
        cfg.annotation_noise_p = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate()?;

    let dom = synthesize(&cfg)?;
    let mut corpus = Vec::new();
    write_jsonl(&mut corpus, &dom.trajectories())?;
    let corpus = String::from_utf8(corpus).expect("JSON output is UTF-8");
    write_file(&args.out.join("trajectories.jsonl"), &corpus)?;
    write_file(&args.out.join("truth_graph.json"), &graph::serialize(&dom.truth_graph))?;
    write_file(&args.out.join("synth_config.json"), &to_json(&cfg))?;

    let early = dom.dialogues.iter().filter(|d| d.terminated_early).count();
    let perturbed: usize = dom.dialogues.iter().map(|d| d.perturbations).sum();
    let occurrences: usize = dom.dialogues.iter().map(|d| d.occurrences).sum();
    println!(
        "{}: {} trajectories ({early} ran out of acts before max_turns), {perturbed} of {occurrences} act occurrences perturbed",
        cfg.domain,
        dom.dialogues.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// edit

pub fn edit(args: EditArgs) -> CliResult<()> {
    let args = args.with_config()?;
    let graph_path = require(args.graph.clone(), "the graph path")?;
    let script_path = require(args.script.clone(), "--script")?;
    let out = require(args.out.clone(), "--out")?;
    let mut graph = load_graph(&graph_path)?;
    let edits = edit_script::parse(&read_file(&script_path)?, graph.vocabulary())?;
    for (n, e) in edits.iter().enumerate() {
        graph = graph
            .apply_edit(e)
            .map_err(|err| {
                let detail = match err {
                    todflow::Error::Edit(m) => m,
                    other => other.to_string(),
                };
                CliError::Core(todflow::Error::Edit(format!("operation {n}: {detail}")))
            })?;
    }
    log::info!("applied {} edits", edits.len());
    write_file(&out, &graph::serialize(&graph))
}

// ---------------------------------------------------------------------------
// bench

pub fn bench(args: BenchArgs) -> CliResult<()> {
    if args.k == Some(0) {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let text = read_file(&args.config)?;
    let mut cfg: BenchConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Core(todflow::Error::Config(format!("{}: {e}", args.config.display()))))?;
    if let Some(k) = args.k {
        cfg.k = k;
    }
    cfg.validate()?;
    let report = run_benchmark(&cfg)?;
    log::info!("benchmark finished in {:.2?}", report.runtime.total);
    if let Some(out) = &args.out {
        write_file(out, &report.to_json())?;
    }
    let table = report.to_table();
    match &args.table {
        Some(path) => write_file(path, &table)?,
        None => print!("{table}"),
    }
    Ok(())
}
