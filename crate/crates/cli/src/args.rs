use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use todflow::ingest::{CorpusFormat, Target};
use todflow::GraphMethod;

use crate::{read_file, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "todflow", version, about = "Infer TOD-Flow graphs and condition dialogue policies on them")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a graph from an annotated corpus.
    Infer(InferArgs),
    /// Condition provider candidates on a graph and write predictions.
    Condition(ConditionArgs),
    /// Score predictions against the gold acts of a corpus.
    Eval(EvalArgs),
    /// Render a graph as Graphviz DOT.
    Export(ExportArgs),
    /// Generate a synthetic domain with a known graph.
    Synth(SynthArgs),
    /// Apply an edit script to a graph.
    Edit(EditArgs),
    /// Run a benchmark described by a config file.
    Bench(BenchArgs),
}

/// Fields filled from a `--config` file when the flag was not given.
pub trait Merge: Sized + for<'de> Deserialize<'de> {
    fn merge_from(&mut self, file: Self);

    fn config_path(&self) -> Option<&PathBuf>;

    fn with_config(mut self) -> CliResult<Self> {
        if let Some(path) = self.config_path().cloned() {
            let text = read_file(&path)?;
            let file: Self = serde_json::from_str(&text).map_err(|e| {
                CliError::Core(todflow::Error::Config(format!("{}: {e}", path.display())))
            })?;
            self.merge_from(file);
        }
        Ok(self)
    }
}

macro_rules! merge_fields {
    ($dst:expr, $src:expr; options: [$($o:ident),*]; flags: [$($b:ident),*]) => {{
        $( if $dst.$o.is_none() { $dst.$o = $src.$o; } )*
        $( $dst.$b |= $src.$b; )*
    }};
}

fn parse_method(s: &str) -> Result<GraphMethod, String> {
    s.parse().map_err(|e: todflow::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<CorpusFormat, String> {
    s.parse().map_err(|e: todflow::Error| e.to_string())
}

fn parse_target(s: &str) -> Result<Target, String> {
    s.parse().map_err(|e: todflow::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerArg {
    User,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Oracle,
    Replay,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetArg {
    RentalCars,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default)]
pub struct CorpusArgs {
    /// Corpus file (JSONL trajectories or SGD dialogues).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Corpus format; sniffed from the content when omitted.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CorpusFormat>,
    /// Restrict to one domain of a multi-domain corpus.
    #[arg(long)]
    pub domain: Option<String>,
    /// Speakers whose turns become examples [default: system].
    #[arg(long, value_parser = parse_target)]
    pub target: Option<Target>,
    /// Fraction of trajectories in the train split [default: 0.9].
    #[arg(long)]
    pub split_ratio: Option<f64>,
    /// Seed of the train/test split [default: 0].
    #[arg(long)]
    pub split_seed: Option<u64>,
}

impl CorpusArgs {
    fn merge_from(&mut self, f: CorpusArgs) {
        merge_fields!(self, f; options: [data, format, domain, target, split_ratio, split_seed]; flags: []);
    }

    pub fn validate(&self) -> CliResult<()> {
        if let Some(r) = self.split_ratio {
            if !(0.0..=1.0).contains(&r) {
                return Err(CliError::Usage(format!("--split-ratio {r} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default)]
pub struct InferArgs {
    /// JSON file with defaults for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    /// todflow | todflow-no-shd | bc | can-reg [default: todflow]
    #[arg(long, value_parser = parse_method)]
    pub method: Option<GraphMethod>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub shd_purity: Option<f64>,
    #[arg(long)]
    pub shd_neg_weight: Option<f64>,
    /// Literal cost of the can-reg baseline.
    #[arg(long)]
    pub penalty: Option<f64>,
    /// Per-leaf pruning cost of the can/should-not tree.
    #[arg(long)]
    pub prune_cost: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output graph JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional per-act fit report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

impl Merge for InferArgs {
    fn merge_from(&mut self, f: Self) {
        self.corpus.merge_from(f.corpus);
        merge_fields!(self, f; options: [method, alpha, max_depth, min_leaf, shd_purity, shd_neg_weight,
            penalty, prune_cost, seed, out, report]; flags: []);
    }

    fn config_path(&self) -> Option<&PathBuf> {
        self.config.as_ref()
    }
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default)]
pub struct ConditionArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Graph JSON produced by `infer` or `edit`.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    /// Which split to predict [default: test].
    #[arg(long, value_enum)]
    pub split: Option<SplitPart>,
    /// Candidate source [default: oracle].
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Replay file for `--provider replay`.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Command line for `--provider external`.
    #[arg(long)]
    pub command: Option<String>,
    /// Per-request timeout of the external provider [default: 30000].
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    /// Oracle: probability of dropping each gold act [default: 0.3].
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Oracle: spurious act rate [default: 0.2].
    #[arg(long)]
    pub spurious: Option<f64>,
    /// Oracle seed [default: 0].
    #[arg(long)]
    pub provider_seed: Option<u64>,
    /// greedy | compliance | majority | violation | uniform [default: compliance]
    #[arg(long)]
    pub strategy: Option<String>,
    /// Candidates per turn [default: 10].
    #[arg(long)]
    pub k: Option<usize>,
    /// Seed of the uniform strategy [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output predictions (JSONL).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Merge for ConditionArgs {
    fn merge_from(&mut self, f: Self) {
        self.corpus.merge_from(f.corpus);
        merge_fields!(self, f; options: [graph, split, provider, replay, command, timeout_ms, dropout,
            spurious, provider_seed, strategy, k, seed, out]; flags: []);
    }

    fn config_path(&self) -> Option<&PathBuf> {
        self.config.as_ref()
    }
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Predictions JSONL written by `condition`.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Corpus holding the gold acts.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CorpusFormat>,
    /// Headline figure is the pooled per-turn mean instead of the mean of
    /// domain means.
    #[arg(long)]
    pub micro: bool,
    /// Write the full report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Merge for EvalArgs {
    fn merge_from(&mut self, f: Self) {
        merge_fields!(self, f; options: [pred, gold, format, out]; flags: [micro]);
    }

    fn config_path(&self) -> Option<&PathBuf> {
        self.config.as_ref()
    }
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Graph JSON.
    pub graph: Option<PathBuf>,
    /// Output DOT file; stdout when omitted.
    #[arg(long)]
    pub dot: Option<PathBuf>,
    /// Leave out should conditions.
    #[arg(long)]
    pub no_shd: bool,
    /// Leave out negative literals.
    #[arg(long)]
    pub no_negative: bool,
    /// Only draw the conditions of this speaker's acts.
    #[arg(long, value_enum)]
    pub speaker: Option<SpeakerArg>,
}

impl Merge for ExportArgs {
    fn merge_from(&mut self, f: Self) {
        merge_fields!(self, f; options: [graph, dot, speaker]; flags: [no_shd, no_negative]);
    }

    fn config_path(&self) -> Option<&PathBuf> {
        self.config.as_ref()
    }
}

#[derive(Debug, Default, Args)]
pub struct SynthArgs {
    /// Synthesis config (JSON); flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    #[arg(long)]
    pub domain: Option<String>,
    #[arg(long)]
    pub n_acts: Option<usize>,
    #[arg(long)]
    pub n_trajectories: Option<usize>,
    #[arg(long)]
    pub max_turns: Option<usize>,
    /// Annotation noise probability.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for `trajectories.jsonl`, `truth_graph.json` and
    /// `synth_config.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Graph JSON to edit.
    pub graph: Option<PathBuf>,
    /// Edit script (JSON list of operations).
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Output graph JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Merge for EditArgs {
    fn merge_from(&mut self, f: Self) {
        merge_fields!(self, f; options: [graph, script, out]; flags: []);
    }

    fn config_path(&self) -> Option<&PathBuf> {
        self.config.as_ref()
    }
}

#[derive(Debug, Default, Args)]
pub struct BenchArgs {
    /// Benchmark config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the candidate count of the config.
    #[arg(long)]
    pub k: Option<usize>,
    /// Output report JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output text table; printed to stdout when omitted.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

pub fn require<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing required option {flag}")))
}

pub fn probability(value: Option<f64>, flag: &str) -> CliResult<()> {
    match value {
        Some(p) if !(0.0..=1.0).contains(&p) => Err(CliError::Usage(format!("{flag} {p} outside [0, 1]"))),
        _ => Ok(()),
    }
}
