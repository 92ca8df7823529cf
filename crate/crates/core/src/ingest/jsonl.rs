use std::io::Write;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::types::{normalize_label, Speaker, Trajectory, TurnRecord};

/// One dialogue per non-blank line:
/// `{"id"?: str, "domain": str, "turns": [{"speaker", "acts", "utterance"?, "db_result"?}]}`.
///
/// Dialogues without an `id` are numbered by their position in the file.
pub fn parse_jsonl(content: &str) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let ordinal = out.len();
        out.push(trajectory_from_value(&value, line_no, ordinal)?);
    }
    if out.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no dialogues in file".into(),
        });
    }
    Ok(out)
}

fn schema(line: usize, field: impl Into<String>) -> Error {
    Error::Schema {
        line,
        field: field.into(),
    }
}

fn trajectory_from_value(value: &Value, line: usize, ordinal: usize) -> Result<Trajectory> {
    let obj = value.as_object().ok_or_else(|| schema(line, "<root>"))?;
    let domain = obj
        .get("domain")
        .and_then(Value::as_str)
        .ok_or_else(|| schema(line, "domain"))?;
    let id = match obj.get("id") {
        None | Some(Value::Null) => ordinal.to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(schema(line, "id")),
    };
    let turns = obj
        .get("turns")
        .and_then(Value::as_array)
        .ok_or_else(|| schema(line, "turns"))?;
    if turns.is_empty() {
        return Err(schema(line, "turns"));
    }
    let turns = turns
        .iter()
        .enumerate()
        .map(|(t, turn)| turn_from_value(turn, line, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        id,
        domain: domain.to_string(),
        turns,
    })
}

fn turn_from_value(value: &Value, line: usize, t: usize) -> Result<TurnRecord> {
    let field = |name: &str| format!("turns[{t}].{name}");
    let obj = value.as_object().ok_or_else(|| schema(line, format!("turns[{t}]")))?;
    let speaker = match obj.get("speaker").and_then(Value::as_str) {
        Some("user") => Speaker::User,
        Some("system") => Speaker::System,
        Some("db") => Speaker::Db,
        _ => return Err(schema(line, field("speaker"))),
    };
    let acts = match obj.get("acts") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|a| a.as_str().map(str::to_string))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| schema(line, field("acts")))?,
        None if speaker == Speaker::Db => Vec::new(),
        _ => return Err(schema(line, field("acts"))),
    };
    let utterance = optional_str(obj, "utterance").map_err(|_| schema(line, field("utterance")))?;
    let db_result = optional_str(obj, "db_result").map_err(|_| schema(line, field("db_result")))?;
    if speaker == Speaker::Db && db_result.is_none() {
        return Err(schema(line, field("db_result")));
    }
    let mut turn = TurnRecord::new(speaker, acts);
    turn.utterance = utterance;
    turn.db_result = db_result.map(|r| normalize_label(&r));
    Ok(turn)
}

fn optional_str(obj: &Map<String, Value>, key: &str) -> std::result::Result<Option<String>, ()> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(()),
    }
}

pub fn write_jsonl<W: Write>(mut out: W, trajectories: &[Trajectory]) -> Result<()> {
    for traj in trajectories {
        let turns: Vec<Value> = traj
            .turns
            .iter()
            .map(|turn| {
                let mut obj = Map::new();
                obj.insert("speaker".into(), json!(turn.speaker.as_str()));
                obj.insert("acts".into(), json!(turn.acts));
                if let Some(u) = &turn.utterance {
                    obj.insert("utterance".into(), json!(u));
                }
                if let Some(r) = &turn.db_result {
                    obj.insert("db_result".into(), json!(r));
                }
                Value::Object(obj)
            })
            .collect();
        let line = json!({ "id": traj.id, "domain": traj.domain, "turns": turns });
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_turn_dialogue() {
        let line = r#"{"domain": "cars", "turns": [
            {"speaker": "user", "acts": ["USER inform_intent FindCar"], "utterance": "I need a car"},
            {"speaker": "system", "acts": ["SYSTEM request city"], "extra": 1}]}"#
            .replace('\n', " ");
        let trajs = parse_jsonl(&line).unwrap();
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].id, "0");
        assert_eq!(trajs[0].turns.len(), 2);
        assert_eq!(trajs[0].turns[0].speaker, Speaker::User);
        assert_eq!(trajs[0].turns[0].utterance.as_deref(), Some("I need a car"));
        assert_eq!(trajs[0].turns[1].acts, vec!["SYSTEM request city"]);
    }

    #[test]
    fn malformed_json_reports_line() {
        let content = "{\"domain\": \"a\", \"turns\": [{\"speaker\": \"user\", \"acts\": []}]}\n{oops\n";
        match parse_jsonl(content) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_is_named() {
        let content = r#"{"domain": "a", "turns": [{"acts": ["x"]}]}"#;
        match parse_jsonl(content) {
            Err(Error::Schema { field, line }) => {
                assert_eq!(field, "turns[0].speaker");
                assert_eq!(line, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        let content = r#"{"turns": []}"#;
        assert!(matches!(parse_jsonl(content), Err(Error::Schema { field, .. }) if field == "domain"));
    }

    #[test]
    fn db_turn_requires_result() {
        let content = r#"{"domain": "a", "turns": [{"speaker": "db"}]}"#;
        assert!(matches!(parse_jsonl(content), Err(Error::Schema { field, .. }) if field == "turns[0].db_result"));
    }

    #[test]
    fn write_then_parse_preserves_turns() {
        let content = r#"{"id": "x1", "domain": "a", "turns": [{"speaker": "user", "acts": ["A"]}, {"speaker": "db", "acts": [], "db_result": "query_success"}]}"#;
        let trajs = parse_jsonl(content).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &trajs).unwrap();
        let back = parse_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, trajs);
    }
}
