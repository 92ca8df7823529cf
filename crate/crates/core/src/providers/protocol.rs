//! Provider protocol v1: one JSON document per line in each direction.
//!
//! ```text
//! request: {"v": 1, "id": int, "domain": str, "k": int, "mode": "acts"|"responses",
//!           "history": [turn], "completion": [label]}
//! reply:   {"v": 1, "id": int, "candidates": [{"acts": [str], "text": str?, "score": num?}]}
//! ```
//!
//! A reply may carry an `"error"` string instead of (or besides) candidates.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ProviderCandidate, ProviderError, ProviderMode, ProviderReply, ProviderRequest};
use crate::types::{ActVocabulary, ActionSet, TurnRecord};

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Serialize)]
struct WireRequest<'a> {
    v: u64,
    id: u64,
    domain: &'a str,
    k: usize,
    mode: ProviderMode,
    history: &'a [TurnRecord],
    completion: Vec<&'a str>,
}

/// Candidate as it appears on the wire, with string labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireCandidate {
    pub acts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// One request line, without the trailing newline.
pub fn encode_request(id: u64, request: &ProviderRequest, vocab: &ActVocabulary) -> String {
    let wire = WireRequest {
        v: PROTOCOL_VERSION,
        id,
        domain: &request.domain,
        k: request.k,
        mode: request.mode,
        history: &request.history,
        completion: request
            .completion
            .ones()
            .filter_map(|i| vocab.label(i))
            .collect(),
    };
    serde_json::to_string(&wire).expect("requests always serialize")
}

/// Maps wire labels to indices. Unknown labels are dropped with a warning
/// rather than failing the whole reply.
pub fn resolve_candidates(
    wire: Vec<WireCandidate>,
    vocab: &ActVocabulary,
) -> Vec<ProviderCandidate> {
    wire.into_iter()
        .map(|c| {
            let mut acts = ActionSet::new();
            for label in &c.acts {
                match vocab.index_of(label) {
                    Some(i) => {
                        acts.insert(i);
                    }
                    None => log::warn!("dropping unknown act label `{label}` from provider reply"),
                }
            }
            ProviderCandidate {
                acts,
                text: c.text,
                score: c.score,
            }
        })
        .collect()
}

pub fn decode_reply(
    line: &str,
    expected_id: u64,
    k: usize,
    vocab: &ActVocabulary,
) -> Result<ProviderReply, ProviderError> {
    let proto = |m: String| ProviderError::Protocol(m);
    let value: Value = serde_json::from_str(line).map_err(|e| proto(format!("malformed reply: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| proto("reply is not a JSON object".into()))?;
    match obj.get("v").and_then(Value::as_u64) {
        Some(PROTOCOL_VERSION) => {}
        other => return Err(proto(format!("unsupported protocol version {other:?}"))),
    }
    let id = obj
        .get("id")
        .and_then(Value::as_u64)
        .ok_or_else(|| proto("reply without an integer `id`".into()))?;
    if id != expected_id {
        return Err(proto(format!("reply id {id} does not match request id {expected_id}")));
    }
    if let Some(err) = obj.get("error").filter(|e| !e.is_null()) {
        let msg = err.as_str().map(str::to_string).unwrap_or_else(|| err.to_string());
        return Err(ProviderError::Remote(msg));
    }
    let candidates = obj
        .get("candidates")
        .cloned()
        .ok_or_else(|| proto("reply without `candidates`".into()))?;
    let wire: Vec<WireCandidate> =
        serde_json::from_value(candidates).map_err(|e| proto(format!("invalid candidates: {e}")))?;
    if wire.len() > k {
        return Err(proto(format!("{} candidates returned for k = {k}", wire.len())));
    }
    Ok(ProviderReply {
        candidates: resolve_candidates(wire, vocab),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{CompletionVector, Speaker};

    fn vocab() -> ActVocabulary {
        ActVocabulary::from_labels(["USER hi", "SYSTEM hi", "SYSTEM bye"]).unwrap()
    }

    #[test]
    fn request_shape() {
        let req = ProviderRequest {
            domain: "d".into(),
            trajectory_id: "t".into(),
            turn_index: 1,
            history: vec![TurnRecord::new(Speaker::User, ["USER hi"])],
            completion: CompletionVector::from_indices(3, [0]),
            k: 2,
            mode: ProviderMode::Acts,
        };
        assert_eq!(
            encode_request(7, &req, &vocab()),
            r#"{"v":1,"id":7,"domain":"d","k":2,"mode":"acts","history":[{"speaker":"user","acts":["USER hi"]}],"completion":["USER hi"]}"#
        );
    }

    #[test]
    fn reply_round_trip_and_unknown_label() {
        let line = r#"{"v":1,"id":3,"candidates":[{"acts":["SYSTEM hi","SYSTEM nope"],"score":-0.5},{"acts":[]}]}"#;
        let reply = decode_reply(line, 3, 10, &vocab()).unwrap();
        assert_eq!(reply.candidates[0].acts, ActionSet::from([1]));
        assert_eq!(reply.candidates[0].score, Some(-0.5));
        assert!(reply.candidates[1].acts.is_empty());
    }

    #[test]
    fn protocol_violations() {
        let v = vocab();
        for (line, id) in [
            ("not json", 1),
            (r#"{"v":1,"id":2,"candidates":[]}"#, 1),
            (r#"{"v":2,"id":1,"candidates":[]}"#, 1),
            (r#"{"v":1,"id":1}"#, 1),
            (r#"{"v":1,"id":1,"candidates":[{"acts":[]},{"acts":[]}]}"#, 1),
        ] {
            let k = 1;
            assert!(
                matches!(decode_reply(line, id, k, &v), Err(ProviderError::Protocol(_))),
                "{line}"
            );
        }
    }

    #[test]
    fn remote_error_field() {
        let r = decode_reply(r#"{"v":1,"id":1,"candidates":[],"error":"quota"}"#, 1, 5, &vocab());
        assert!(matches!(r, Err(ProviderError::Remote(m)) if m == "quota"));
    }
}
