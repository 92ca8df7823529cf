//! Act-set F1, graph recovery, and the benchmark harness.

pub mod bench;
pub mod metrics;
pub mod recovery;

pub use bench::{run_benchmark, BenchConfig, BenchmarkReport, CellScore, CorpusSpec, ProviderSpec, Regression};
pub use metrics::{f1_turn, score_domain, summarize, F1Summary, TurnScore};
pub use recovery::{graph_recovery_score, singleton_closure, RecoveryReport};
