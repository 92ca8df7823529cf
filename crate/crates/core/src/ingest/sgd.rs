//! Adapter for Schema-Guided Dialogue (SGD) dumps.
//!
//! Acts become `"<SPEAKER> <act> <slot>"` labels (intent acts use the intent
//! name in place of the slot). A system turn that calls a service is preceded
//! by two extra records: a system turn with the single act
//! `"SYSTEM query <Method>"`, and a db turn whose result is `query_success`
//! when the call returned rows and `query_failure` otherwise.

use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::types::{Speaker, Trajectory, TurnRecord};

pub const QUERY_SUCCESS: &str = "query_success";
pub const QUERY_FAILURE: &str = "query_failure";

#[derive(Clone, Debug, Deserialize)]
pub struct SgdDialogue {
    pub dialogue_id: String,
    #[serde(default)]
    pub services: Vec<String>,
    pub turns: Vec<SgdTurn>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SgdTurn {
    pub speaker: String,
    #[serde(default)]
    pub utterance: Option<String>,
    pub frames: Vec<SgdFrame>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SgdFrame {
    #[serde(default)]
    pub service: String,
    pub actions: Vec<SgdAction>,
    #[serde(default)]
    pub service_call: Option<SgdServiceCall>,
    #[serde(default)]
    pub service_results: Option<Vec<Value>>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SgdAction {
    pub act: String,
    #[serde(default)]
    pub slot: String,
    #[serde(default)]
    pub values: Vec<String>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SgdServiceCall {
    pub method: String,
}

pub fn parse_sgd(content: &str) -> Result<Vec<Trajectory>> {
    let dialogues: Vec<SgdDialogue> = serde_json::from_str(content).map_err(|e| {
        if e.is_data() {
            Error::Schema {
                line: e.line(),
                field: missing_field(&e.to_string()).unwrap_or_else(|| e.to_string()),
            }
        } else {
            Error::Parse {
                line: e.line(),
                message: e.to_string(),
            }
        }
    })?;
    if dialogues.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no dialogues in file".into(),
        });
    }
    dialogues.iter().map(sgd_adapt).collect()
}

fn missing_field(message: &str) -> Option<String> {
    let rest = message.split("missing field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

pub fn sgd_adapt(raw: &SgdDialogue) -> Result<Trajectory> {
    let mut turns = Vec::with_capacity(raw.turns.len());
    for (t, turn) in raw.turns.iter().enumerate() {
        let speaker = match turn.speaker.to_ascii_uppercase().as_str() {
            "USER" => Speaker::User,
            "SYSTEM" => Speaker::System,
            _ => {
                return Err(Error::Schema {
                    line: 0,
                    field: format!("{}.turns[{t}].speaker", raw.dialogue_id),
                })
            }
        };
        if turn.frames.is_empty() {
            return Err(Error::Schema {
                line: 0,
                field: format!("{}.turns[{t}].frames", raw.dialogue_id),
            });
        }
        let prefix = speaker.as_str().to_ascii_uppercase();
        let mut record = TurnRecord::new(speaker, Vec::<String>::new());
        record.utterance = turn.utterance.clone();
        for frame in &turn.frames {
            if speaker == Speaker::System {
                if let Some(call) = &frame.service_call {
                    turns.push(TurnRecord::new(
                        Speaker::System,
                        [format!("SYSTEM query {}", call.method)],
                    ));
                    let found = frame.service_results.as_ref().is_some_and(|r| !r.is_empty());
                    turns.push(TurnRecord::db(if found { QUERY_SUCCESS } else { QUERY_FAILURE }));
                }
            }
            for action in &frame.actions {
                record.push_act(act_label(&prefix, action));
            }
        }
        turns.push(record);
    }
    if turns.is_empty() {
        return Err(Error::Schema {
            line: 0,
            field: format!("{}.turns", raw.dialogue_id),
        });
    }
    Ok(Trajectory {
        id: raw.dialogue_id.clone(),
        domain: if raw.services.is_empty() {
            "unknown".to_string()
        } else {
            raw.services.join("+")
        },
        turns,
    })
}

fn act_label(prefix: &str, action: &SgdAction) -> String {
    let act = action.act.to_ascii_lowercase();
    let detail = if action.slot == "intent" {
        action.values.first().cloned().unwrap_or_default()
    } else {
        action.slot.clone()
    };
    if detail.is_empty() {
        format!("{prefix} {act}")
    } else {
        format!("{prefix} {act} {detail}")
    }
}
