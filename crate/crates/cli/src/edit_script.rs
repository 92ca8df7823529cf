//! Edit scripts may name acts by label instead of index: an operation's
//! `act` and any literal's `act` field are resolved against the graph's
//! vocabulary before the script is decoded.

use serde_json::{Map, Value};

use todflow::graph::GraphEdit;
use todflow::ActVocabulary;

use crate::{CliError, CliResult};

fn bad(message: String) -> CliError {
    CliError::Core(todflow::Error::Edit(message))
}

fn act_index(v: &Value, vocab: &ActVocabulary, at: &str) -> CliResult<Value> {
    match v {
        Value::String(label) => vocab
            .index_of(label)
            .map(Value::from)
            .ok_or_else(|| bad(format!("{at}: unknown act `{label}`"))),
        Value::Number(_) => Ok(v.clone()),
        _ => Err(bad(format!("{at}: act must be a label or an index"))),
    }
}

fn resolve_literal(lit: &Value, vocab: &ActVocabulary, at: &str) -> CliResult<Value> {
    let Some(obj) = lit.as_object() else {
        return Err(bad(format!("{at}: literal must be an object")));
    };
    let mut out = Map::new();
    let index = match (obj.get("i"), obj.get("act")) {
        (Some(i), None) => i.clone(),
        (None, Some(a)) => act_index(a, vocab, at)?,
        _ => return Err(bad(format!("{at}: literal needs exactly one of `i` or `act`"))),
    };
    out.insert("i".into(), index);
    out.insert("neg".into(), obj.get("neg").cloned().unwrap_or(Value::Bool(false)));
    Ok(Value::Object(out))
}

fn resolve_clause(clause: &Value, vocab: &ActVocabulary, at: &str) -> CliResult<Value> {
    let Some(lits) = clause.as_array() else {
        return Err(bad(format!("{at}: clause must be a list of literals")));
    };
    lits.iter()
        .enumerate()
        .map(|(j, l)| resolve_literal(l, vocab, &format!("{at}/{j}")))
        .collect::<CliResult<Vec<_>>>()
        .map(Value::Array)
}

fn resolve_condition(cond: &Value, vocab: &ActVocabulary, at: &str) -> CliResult<Value> {
    match cond {
        Value::Bool(true) => Ok(Value::Array(vec![Value::Array(vec![])])),
        Value::Bool(false) => Ok(Value::Array(vec![])),
        Value::Array(clauses) => clauses
            .iter()
            .enumerate()
            .map(|(k, c)| resolve_clause(c, vocab, &format!("{at}/{k}")))
            .collect::<CliResult<Vec<_>>>()
            .map(Value::Array),
        _ => Err(bad(format!("{at}: condition must be a clause list or a boolean"))),
    }
}

/// Parses a script: either a list of operations or `{"edits": [...]}`.
pub fn parse(text: &str, vocab: &ActVocabulary) -> CliResult<Vec<GraphEdit>> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| CliError::Core(todflow::Error::Parse {
            line: e.line(),
            message: e.to_string(),
        }))?;
    let ops = match &root {
        Value::Array(ops) => ops.clone(),
        Value::Object(o) => match o.get("edits") {
            Some(Value::Array(ops)) => ops.clone(),
            _ => return Err(bad("script object needs an `edits` list".into())),
        },
        _ => return Err(bad("script must be a list of edit operations".into())),
    };
    ops.into_iter()
        .enumerate()
        .map(|(n, mut op)| {
            let at = format!("/{n}");
            let obj = op
                .as_object_mut()
                .ok_or_else(|| bad(format!("{at}: operation must be an object")))?;
            if let Some(a) = obj.get("act") {
                let idx = act_index(a, vocab, &at)?;
                obj.insert("act".into(), idx);
            }
            if let Some(c) = obj.get("condition") {
                let c = resolve_condition(c, vocab, &format!("{at}/condition"))?;
                obj.insert("condition".into(), c);
            }
            if let Some(c) = obj.get("clause") {
                let c = resolve_clause(c, vocab, &format!("{at}/clause"))?;
                obj.insert("clause".into(), c);
            }
            serde_json::from_value(op).map_err(|e| bad(format!("{at}: {e}")))
        })
        .collect()
}
