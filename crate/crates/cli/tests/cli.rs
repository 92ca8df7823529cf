use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_todflow"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn todflow")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "todflow {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small synthetic corpus with its truth graph.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let out = dir.path().join("synth");
        ok(&["synth", "--preset", "rental-cars", "--n-trajectories", "120", "--seed", "3", "--out", p(&out)]);
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn corpus(&self) -> PathBuf {
        self.path("synth/trajectories.jsonl")
    }

    fn graph(&self) -> PathBuf {
        let g = self.path("g.json");
        if !g.exists() {
            ok(&["infer", "--data", p(&self.corpus()), "--out", p(&g)]);
        }
        g
    }
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    read(path).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn synth_writes_corpus_truth_and_config() {
    let fx = Fixture::new();
    for f in ["trajectories.jsonl", "truth_graph.json", "synth_config.json"] {
        assert!(fx.path("synth").join(f).exists(), "{f} missing");
    }
    assert_eq!(jsonl(&fx.corpus()).len(), 120);
    let truth = todflow::graph::deserialize(&read(&fx.path("synth/truth_graph.json"))).unwrap();
    assert_eq!(truth.vocabulary().len(), 12);
}

#[test]
fn synth_from_config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("s.json");
    std::fs::write(&cfg, r#"{"domain": "Toy", "n_acts": 8, "n_trajectories": 40, "seed": 5}"#).unwrap();
    let out = dir.path().join("o");
    ok(&["synth", "--config", p(&cfg), "--n-trajectories", "25", "--out", p(&out)]);
    let lines = jsonl(&out.join("trajectories.jsonl"));
    assert_eq!(lines.len(), 25);
    assert!(lines.iter().all(|l| l["domain"] == "Toy"));
    let written: Value = serde_json::from_str(&read(&out.join("synth_config.json"))).unwrap();
    assert_eq!(written["seed"], 5);
    assert_eq!(written["n_trajectories"], 25);
}

#[test]
fn infer_each_method_writes_a_loadable_graph() {
    let fx = Fixture::new();
    for method in ["todflow", "bc", "can-reg"] {
        let g = fx.path(&format!("{method}.json"));
        ok(&["infer", "--data", p(&fx.corpus()), "--method", method, "--alpha", "0.5", "--out", p(&g)]);
        let graph = todflow::graph::deserialize(&read(&g)).unwrap();
        assert_eq!(graph.domain(), "RentalCars");
        assert_eq!(graph.vocabulary().len(), 12);
    }
}

#[test]
fn infer_report_has_one_entry_per_fitted_act() {
    let fx = Fixture::new();
    let g = fx.path("g.json");
    let r = fx.path("r.json");
    ok(&["infer", "--data", p(&fx.corpus()), "--out", p(&g), "--report", p(&r)]);
    let report: Value = serde_json::from_str(&read(&r)).unwrap();
    assert!(!report.as_array().unwrap().is_empty());
}

#[test]
fn infer_is_byte_identical_across_runs_and_thread_counts() {
    let fx = Fixture::new();
    let a = fx.path("a.json");
    let b = fx.path("b.json");
    ok(&["infer", "--data", p(&fx.corpus()), "--out", p(&a)]);
    ok(&["--jobs", "1", "infer", "--data", p(&fx.corpus()), "--out", p(&b)]);
    assert_eq!(read(&a), read(&b));
}

#[test]
fn infer_reads_config_and_flags_win() {
    let fx = Fixture::new();
    let cfg = fx.path("infer.json");
    let from_cfg = fx.path("from_cfg.json");
    std::fs::write(
        &cfg,
        serde_json::json!({"data": fx.corpus(), "method": "bc", "out": from_cfg}).to_string(),
    )
    .unwrap();
    ok(&["infer", "--config", p(&cfg)]);
    assert!(from_cfg.exists());

    let overridden = fx.path("flag.json");
    ok(&["infer", "--config", p(&cfg), "--out", p(&overridden)]);
    assert_eq!(read(&from_cfg), read(&overridden));
}

#[test]
fn missing_input_exits_2() {
    let dir = TempDir::new().unwrap();
    let out = run(&["infer", "--data", "/nonexistent/d.jsonl", "--out", p(&dir.path().join("g.json"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("file not found"));
}

#[test]
fn invalid_flags_exit_2_before_any_io() {
    let dir = TempDir::new().unwrap();
    let g = dir.path().join("g.json");
    // the corpus does not exist, so exit 2 with a flag message proves validation ran first
    let out = run(&["infer", "--data", "/nonexistent", "--split-ratio", "1.5", "--out", p(&g)]);
    assert_eq!(code(&out), 2);
    assert!(!String::from_utf8_lossy(&out.stderr).contains("file not found"));

    let out = run(&["condition", "--graph", "/nonexistent", "--data", "/nonexistent", "--out", p(&g), "--k", "0"]);
    assert_eq!(code(&out), 2);
    let out = run(&["condition", "--graph", "/x", "--data", "/x", "--out", p(&g), "--strategy", "best"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&run(&["--jobs", "0", "synth", "--out", p(dir.path())])), 2);
    assert_eq!(code(&run(&["infer", "--bogus"])), 2);
    assert!(!g.exists());
}

#[test]
fn condition_oracle_predictions_carry_audit_fields() {
    let fx = Fixture::new();
    let preds = fx.path("p.jsonl");
    ok(&[
        "condition", "--graph", p(&fx.graph()), "--data", p(&fx.corpus()),
        "--dropout", "0.3", "--spurious", "0.2", "--out", p(&preds),
    ]);
    let lines = jsonl(&preds);
    assert!(!lines.is_empty());
    for l in &lines {
        for key in ["domain", "traj", "turn", "speaker", "strategy", "predicted", "chosen_rank", "added", "removed"] {
            assert!(l.get(key).is_some(), "record lacks {key}: {l}");
        }
        assert_eq!(l["speaker"], "system");
        assert_eq!(l["strategy"], "compliance");
    }
    // some turn had acts added or removed by the graph
    assert!(lines
        .iter()
        .any(|l| !l["added"].as_array().unwrap().is_empty() || !l["removed"].as_array().unwrap().is_empty()));
}

#[test]
fn uniform_strategy_is_reproducible_for_a_seed() {
    let fx = Fixture::new();
    let g = fx.graph();
    let runs: Vec<String> = ["7", "7", "8"]
        .iter()
        .enumerate()
        .map(|(i, seed)| {
            let out = fx.path(&format!("u{i}.jsonl"));
            ok(&[
                "condition", "--graph", p(&g), "--data", p(&fx.corpus()), "--split", "all",
                "--dropout", "0.3", "--spurious", "0.2",
                "--k", "10", "--strategy", "uniform", "--seed", seed, "--out", p(&out),
            ]);
            read(&out)
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_ne!(runs[0], runs[2]);
}

/// Replay candidates for every system turn: rank 0 is a wrong act, rank 1 the gold acts.
fn write_replay(fx: &Fixture) -> PathBuf {
    let mut out = String::new();
    for t in jsonl(&fx.corpus()) {
        for (i, turn) in t["turns"].as_array().unwrap().iter().enumerate() {
            if turn["speaker"] != "system" {
                continue;
            }
            let line = serde_json::json!({
                "traj": t["id"],
                "turn": i,
                "candidates": [{"acts": ["SYSTEM offer car_name", "SYSTEM request car_type"]}, {"acts": turn["acts"]}],
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
    }
    let path = fx.path("replay.jsonl");
    std::fs::write(&path, out).unwrap();
    path
}

#[test]
fn greedy_passes_rank_zero_through_and_compliance_is_deterministic() {
    let fx = Fixture::new();
    let g = fx.graph();
    let replay = write_replay(&fx);
    let predict = |strategy: &str, name: &str| {
        let out = fx.path(name);
        ok(&[
            "condition", "--graph", p(&g), "--data", p(&fx.corpus()), "--provider", "replay",
            "--replay", p(&replay), "--strategy", strategy, "--out", p(&out),
        ]);
        out
    };
    let greedy = jsonl(&predict("greedy", "g.jsonl"));
    for l in &greedy {
        assert_eq!(l["chosen_rank"], 0);
        let mut got: Vec<&str> = l["predicted"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        got.sort_unstable();
        assert_eq!(got, ["SYSTEM offer car_name", "SYSTEM request car_type"]);
        assert!(l["added"].as_array().unwrap().is_empty());
    }
    let a = read(&predict("compliance", "c1.jsonl"));
    let b = read(&predict("compliance", "c2.jsonl"));
    assert_eq!(a, b);
}

#[test]
fn provider_failure_names_the_turn_and_exits_1() {
    let fx = Fixture::new();
    let out = run(&[
        "condition", "--graph", p(&fx.graph()), "--data", p(&fx.corpus()), "--provider", "external",
        "--command", "sh -c 'exit 3'", "--out", p(&fx.path("x.jsonl")),
    ]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("trajectory `RentalCars-") && err.contains("turn "), "{err}");
}

#[test]
fn eval_scores_predictions_against_gold() {
    let fx = Fixture::new();
    // gold acts as predictions score 100
    let mut perfect = String::new();
    for t in jsonl(&fx.corpus()) {
        for (i, turn) in t["turns"].as_array().unwrap().iter().enumerate() {
            let rec = serde_json::json!({"traj": t["id"], "turn": i, "predicted": turn["acts"]});
            perfect.push_str(&rec.to_string());
            perfect.push('\n');
        }
    }
    let preds = fx.path("perfect.jsonl");
    std::fs::write(&preds, perfect).unwrap();
    let report = fx.path("eval.json");
    let out = ok(&["eval", "--pred", p(&preds), "--gold", p(&fx.corpus()), "--out", p(&report)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("macro F1 100.00"));
    let r: Value = serde_json::from_str(&read(&report)).unwrap();
    assert_eq!(r["macro_f1"], 1.0);

    let conditioned = fx.path("p.jsonl");
    ok(&[
        "condition", "--graph", p(&fx.graph()), "--data", p(&fx.corpus()),
        "--dropout", "0.3", "--spurious", "0.2", "--out", p(&conditioned),
    ]);
    let out = ok(&["eval", "--pred", p(&conditioned), "--gold", p(&fx.corpus()), "--micro"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("micro F1 "));
}

#[test]
fn eval_rejects_turns_missing_from_gold() {
    let fx = Fixture::new();
    let preds = fx.path("bad.jsonl");
    std::fs::write(&preds, "{\"traj\": \"nope\", \"turn\": 0, \"predicted\": []}\n").unwrap();
    assert_eq!(code(&run(&["eval", "--pred", p(&preds), "--gold", p(&fx.corpus())])), 2);
}

#[test]
fn export_dot_draws_negative_edges_dashed() {
    let fx = Fixture::new();
    let truth = fx.path("synth/truth_graph.json");
    let dot = fx.path("g.dot");
    ok(&["export", p(&truth), "--dot", p(&dot)]);
    let text = read(&dot);
    assert!(text.starts_with("digraph"));
    assert!(text.contains("style=dashed"));

    let out = ok(&["export", p(&truth), "--no-negative"]);
    assert!(!String::from_utf8_lossy(&out.stdout).contains("style=dashed"));
}

#[test]
fn export_speaker_filter_limits_nodes_with_conditions() {
    let fx = Fixture::new();
    let truth = fx.path("synth/truth_graph.json");
    let all = String::from_utf8(ok(&["export", p(&truth)]).stdout).unwrap();
    let user = String::from_utf8(ok(&["export", p(&truth), "--speaker", "user"]).stdout).unwrap();
    assert!(user.len() < all.len());
}

#[test]
fn edit_script_by_label_round_trips() {
    let fx = Fixture::new();
    let truth = fx.path("synth/truth_graph.json");
    let script = fx.path("edit.json");
    std::fs::write(
        &script,
        r#"{"edits": [
            {"op": "set_condition", "act": "SYSTEM offer car_name", "target": "can_shdnt", "condition": false},
            {"op": "add_clause", "act": "SYSTEM offer car_name", "target": "can_shdnt",
             "clause": [{"act": "query_success"}, {"act": "SYSTEM request car_type", "neg": true}]}
        ]}"#,
    )
    .unwrap();
    let edited = fx.path("edited.json");
    ok(&["edit", p(&truth), "--script", p(&script), "--out", p(&edited)]);
    let g = todflow::graph::deserialize(&read(&edited)).unwrap();
    let act = g.vocabulary().index_of("SYSTEM offer car_name").unwrap();
    let cond = g.condition(act, todflow::graph::ConditionTarget::CanShdnt).unwrap();
    assert_eq!(
        cond.display(g.vocabulary()).to_string(),
        "(![SYSTEM request car_type] & [query_success])"
    );

    std::fs::write(&script, r#"[{"op": "set_condition", "act": "nope", "target": "shd", "condition": true}]"#).unwrap();
    let out = run(&["edit", p(&truth), "--script", p(&script), "--out", p(&fx.path("x.json"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown act `nope`"));
}

#[test]
fn bench_writes_report_and_table() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bench.json");
    std::fs::write(
        &cfg,
        r#"{"synth": [{"domain": "S", "n_acts": 8, "n_trajectories": 200, "seed": 1}],
            "methods": ["todflow"], "strategies": ["greedy", "compliance"],
            "provider": {"kind": "oracle", "dropout_p": 0.3, "spurious_p": 0.2, "seed": 1}}"#,
    )
    .unwrap();
    let report = dir.path().join("r.json");
    let table = dir.path().join("t.txt");
    ok(&["bench", "--config", p(&cfg), "--out", p(&report), "--table", p(&table)]);
    let first = read(&report);
    assert!(read(&table).contains("todflow"));
    let r: Value = serde_json::from_str(&first).unwrap();
    assert!(r.is_object());

    ok(&["bench", "--config", p(&cfg), "--out", p(&report), "--table", p(&table)]);
    let strip = |s: &str| {
        let mut v: Value = serde_json::from_str(s).unwrap();
        v.as_object_mut().unwrap().remove("runtime");
        v
    };
    assert_eq!(strip(&first), strip(&read(&report)));
}
