use std::time::{Duration, Instant};

use todflow::providers::{CandidateProvider, ExternalProvider, ProviderError, ProviderMode, ProviderRequest};
use todflow::{ActVocabulary, ActionSet, CompletionVector, Speaker, TurnRecord};

const STUB: &str = env!("CARGO_BIN_EXE_todflow-stub-provider");

fn vocab() -> ActVocabulary {
    ActVocabulary::from_labels(["USER greet", "SYSTEM ask", "SYSTEM offer", "query_success"]).unwrap()
}

fn request(k: usize) -> ProviderRequest {
    ProviderRequest {
        domain: "Toy".into(),
        trajectory_id: "t0".into(),
        turn_index: 1,
        history: vec![TurnRecord::new(Speaker::User, ["USER greet"])],
        completion: CompletionVector::from_indices(4, [0]),
        k,
        mode: ProviderMode::Acts,
    }
}

fn spawn(args: &[&str], timeout_ms: u64) -> ExternalProvider {
    let mut argv = vec![STUB.to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    ExternalProvider::spawn(&argv, Duration::from_millis(timeout_ms), vocab()).unwrap()
}

fn set(labels: &[&str]) -> ActionSet {
    ActionSet::from_labels(&vocab(), labels).unwrap()
}

#[test]
fn fixed_candidates_parse_in_rank_order() {
    let mut p = spawn(
        &["--candidates", r#"[{"acts": ["SYSTEM offer"], "score": 0.9}, {"acts": ["SYSTEM ask"], "text": "what?"}]"#],
        5_000,
    );
    for _ in 0..3 {
        let reply = p.candidates(&request(10)).unwrap();
        assert_eq!(reply.len(), 2);
        assert_eq!(reply.candidates[0].acts, set(&["SYSTEM offer"]));
        assert_eq!(reply.candidates[0].score, Some(0.9));
        assert_eq!(reply.candidates[1].text.as_deref(), Some("what?"));
        let ranks: Vec<usize> = reply.to_candidates().iter().map(|c| c.provider_rank).collect();
        assert_eq!(ranks, [0, 1]);
    }
}

#[test]
fn echo_sees_the_completion_labels() {
    let mut p = spawn(&["--echo"], 5_000);
    let reply = p.candidates(&request(3)).unwrap();
    assert_eq!(reply.candidates[0].acts, set(&["USER greet"]));
}

#[test]
fn unknown_labels_are_dropped_not_fatal() {
    let mut p = spawn(&["--candidates", r#"[{"acts": ["SYSTEM offer", "SYSTEM dance"]}]"#], 5_000);
    let reply = p.candidates(&request(1)).unwrap();
    assert_eq!(reply.candidates[0].acts, set(&["SYSTEM offer"]));
}

#[test]
fn more_than_k_candidates_is_a_protocol_error() {
    let mut p = spawn(&["--candidates", r#"[{"acts": []}, {"acts": []}, {"acts": []}]"#], 5_000);
    assert!(matches!(p.candidates(&request(2)), Err(ProviderError::Protocol(_))));
}

#[test]
fn mismatched_id_is_a_protocol_error() {
    let mut p = spawn(&["--candidates", "[]", "--wrong-id"], 5_000);
    assert!(matches!(p.candidates(&request(1)), Err(ProviderError::Protocol(_))));
}

#[test]
fn malformed_reply_is_a_protocol_error() {
    let mut p = spawn(&["--bad-json"], 5_000);
    assert!(matches!(p.candidates(&request(1)), Err(ProviderError::Protocol(_))));
}

#[test]
fn remote_error_field_surfaces() {
    let mut p = spawn(&["--error", "quota exceeded"], 5_000);
    match p.candidates(&request(1)) {
        Err(ProviderError::Remote(m)) => assert!(m.contains("quota exceeded")),
        other => panic!("expected remote error, got {other:?}"),
    }
}

#[test]
fn exit_mid_request_reports_stderr_tail() {
    let mut p = spawn(&["--candidates", "[]", "--exit-after", "1"], 5_000);
    p.candidates(&request(1)).unwrap();
    match p.candidates(&request(1)) {
        Err(ProviderError::Spawn { stderr_tail, .. }) => {
            assert!(stderr_tail.contains("exiting on request 1"), "{stderr_tail}")
        }
        other => panic!("expected spawn error, got {other:?}"),
    }
    // the provider stays failed instead of hanging on a dead pipe
    assert!(matches!(p.candidates(&request(1)), Err(ProviderError::Spawn { .. })));
}

#[test]
fn slow_provider_times_out() {
    let mut p = spawn(&["--candidates", "[]", "--sleep-ms", "3000"], 200);
    let start = Instant::now();
    assert!(matches!(p.candidates(&request(1)), Err(ProviderError::Timeout(_))));
    assert!(start.elapsed() < Duration::from_secs(2));
}

#[test]
fn missing_program_is_a_spawn_error() {
    let argv = vec!["/nonexistent/provider".to_string()];
    assert!(matches!(
        ExternalProvider::spawn(&argv, Duration::from_secs(1), vocab()),
        Err(ProviderError::Spawn { .. })
    ));
}

#[test]
fn zero_k_is_rejected_before_the_wire() {
    let mut p = spawn(&["--candidates", "[]"], 5_000);
    assert!(matches!(p.candidates(&request(0)), Err(ProviderError::Invalid(_))));
}
