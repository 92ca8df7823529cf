//! Canonical JSON persistence.
//!
//! ```text
//! {"version": 1, "domain": str, "vocabulary": [str],
//!  "acts": {"<label>": {"can_shdnt": [[{"i": int, "neg": bool}]], "shd": [[...]], "can_only": [[...]]?}},
//!  "metadata": {...}}
//! ```
//!
//! The reader walks the document by hand so that every schema error carries
//! the JSON pointer of the offending value.

use indexmap::IndexMap;
use serde::Serialize;
use serde_json::{Map, Value};

use super::{ActConditions, GraphMetadata, TodFlowGraph};
use crate::error::{Error, Result};
use crate::learn::dnf::{Clause, DnfCondition, Literal};
use crate::types::ActVocabulary;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Serialize)]
struct GraphDoc<'a> {
    version: u64,
    domain: &'a str,
    vocabulary: &'a ActVocabulary,
    acts: IndexMap<&'a str, &'a ActConditions>,
    metadata: &'a GraphMetadata,
}

/// Pretty-printed JSON with acts in vocabulary order. Output is
/// deterministic for a given graph.
pub fn serialize(graph: &TodFlowGraph) -> String {
    let doc = GraphDoc {
        version: FORMAT_VERSION,
        domain: graph.domain(),
        vocabulary: graph.vocabulary(),
        acts: graph
            .vocabulary()
            .labels()
            .iter()
            .map(String::as_str)
            .zip(graph.entries())
            .collect(),
        metadata: graph.metadata(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("graph documents always serialize");
    out.push('\n');
    out
}

fn escape(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

fn expect_object<'a>(v: &'a Value, ptr: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::graph_format(ptr, "expected an object"))
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, ptr: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::graph_format(format!("{ptr}/{}", escape(key)), "missing required field"))
}

fn parse_literal(v: &Value, ptr: &str, n: usize) -> Result<Literal> {
    let obj = expect_object(v, ptr)?;
    let i_ptr = format!("{ptr}/i");
    let act = field(obj, "i", ptr)?
        .as_u64()
        .ok_or_else(|| Error::graph_format(&i_ptr, "expected a non-negative integer"))? as usize;
    if act >= n {
        return Err(Error::graph_format(
            i_ptr,
            format!("literal index {act} out of range for {n} acts"),
        ));
    }
    let negated = match obj.get("neg") {
        None => false,
        Some(b) => b
            .as_bool()
            .ok_or_else(|| Error::graph_format(format!("{ptr}/neg"), "expected a boolean"))?,
    };
    Ok(Literal { act, negated })
}

fn parse_condition(v: &Value, ptr: &str, n: usize) -> Result<DnfCondition> {
    let clauses = v
        .as_array()
        .ok_or_else(|| Error::graph_format(ptr, "expected an array of clauses"))?;
    let mut out = Vec::with_capacity(clauses.len());
    for (ci, clause) in clauses.iter().enumerate() {
        let cptr = format!("{ptr}/{ci}");
        let lits = clause
            .as_array()
            .ok_or_else(|| Error::graph_format(&cptr, "expected an array of literals"))?;
        let lits = lits
            .iter()
            .enumerate()
            .map(|(li, l)| parse_literal(l, &format!("{cptr}/{li}"), n))
            .collect::<Result<Vec<_>>>()?;
        out.push(Clause::new(lits));
    }
    Ok(DnfCondition::from_clauses(out))
}

pub fn deserialize(text: &str) -> Result<TodFlowGraph> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| Error::graph_format("", format!("invalid JSON: {e}")))?;
    let obj = expect_object(&root, "")?;

    let version = field(obj, "version", "")?;
    if version.as_u64() != Some(FORMAT_VERSION) {
        return Err(Error::graph_format(
            "/version",
            format!("unsupported version {version}; expected {FORMAT_VERSION}"),
        ));
    }
    let domain = field(obj, "domain", "")?
        .as_str()
        .ok_or_else(|| Error::graph_format("/domain", "expected a string"))?;

    let labels = field(obj, "vocabulary", "")?
        .as_array()
        .ok_or_else(|| Error::graph_format("/vocabulary", "expected an array of strings"))?;
    let labels = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.as_str()
                .ok_or_else(|| Error::graph_format(format!("/vocabulary/{i}"), "expected a string"))
        })
        .collect::<Result<Vec<_>>>()?;
    let vocabulary =
        ActVocabulary::from_labels(&labels).map_err(|e| Error::graph_format("/vocabulary", e.to_string()))?;
    let n = vocabulary.len();

    let acts = expect_object(field(obj, "acts", "")?, "/acts")?;
    let mut entries = vec![ActConditions::default(); n];
    for (label, entry) in acts {
        let ptr = format!("/acts/{}", escape(label));
        let act = vocabulary
            .index_of(label)
            .ok_or_else(|| Error::graph_format(&ptr, format!("act `{label}` is not in the vocabulary")))?;
        let eobj = expect_object(entry, &ptr)?;
        let mut conds = ActConditions::default();
        if let Some(v) = eobj.get("can_shdnt") {
            conds.can_shdnt = parse_condition(v, &format!("{ptr}/can_shdnt"), n)?;
        }
        if let Some(v) = eobj.get("shd") {
            conds.shd = parse_condition(v, &format!("{ptr}/shd"), n)?;
        }
        if let Some(v) = eobj.get("can_only") {
            if !v.is_null() {
                conds.can_only = Some(parse_condition(v, &format!("{ptr}/can_only"), n)?);
            }
        }
        entries[act] = conds;
    }

    let metadata = match obj.get("metadata") {
        None | Some(Value::Null) => GraphMetadata::default(),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::graph_format("/metadata", e.to_string()))?,
    };
    TodFlowGraph::from_parts(domain, vocabulary, entries, metadata)
}
