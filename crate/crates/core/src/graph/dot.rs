//! Graphviz export. Each DNF clause becomes one `&` node with an edge from
//! every literal's act and an edge into the conditioned act; clauses of the
//! same condition are implicitly OR-ed. Negative literals are dashed, should
//! conditions are blue.
//!
//! `from_dot` reads back exactly the dialect written here, which lets the
//! export be checked for semantic round trips.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{ActConditions, GraphMetadata, TodFlowGraph};
use crate::error::{Error, Result};
use crate::learn::dnf::{Clause, DnfCondition, Literal};
use crate::types::{ActVocabulary, ActionSet};

#[derive(Clone, Debug)]
pub struct DotOptions {
    pub include_shd: bool,
    pub include_negative_edges: bool,
    /// Only draw the conditions of these acts; `None` draws all.
    pub acts: Option<ActionSet>,
}

impl Default for DotOptions {
    fn default() -> Self {
        Self {
            include_shd: true,
            include_negative_edges: true,
            acts: None,
        }
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn write_clause(out: &mut String, id: &str, clause: &Clause, target: usize, shd: bool, opts: &DotOptions) {
    let color = if shd { ", color=blue" } else { "" };
    let _ = writeln!(out, "  {id} [label=\"&\", shape=circle{color}];");
    for lit in clause.literals() {
        if lit.negated && !opts.include_negative_edges {
            continue;
        }
        let mut attrs = Vec::new();
        if lit.negated {
            attrs.push("style=dashed");
        }
        if shd {
            attrs.push("color=blue");
        }
        if attrs.is_empty() {
            let _ = writeln!(out, "  a{} -> {id};", lit.act);
        } else {
            let _ = writeln!(out, "  a{} -> {id} [{}];", lit.act, attrs.join(", "));
        }
    }
    let _ = writeln!(out, "  {id} -> a{target}{};", if shd { " [color=blue]" } else { "" });
}

pub fn to_dot(graph: &TodFlowGraph, opts: &DotOptions) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", quote(graph.domain()));
    if graph.n_acts() == 0 {
        out.push_str("}\n");
        return out;
    }
    out.push_str("  rankdir=LR;\n  node [shape=box];\n");
    for (i, label) in graph.vocabulary().labels().iter().enumerate() {
        let _ = writeln!(out, "  a{i} [label={}];", quote(label));
    }

    let drawn = |act: usize| opts.acts.as_ref().is_none_or(|s| s.contains(act));
    let needs_false = graph
        .entries()
        .iter()
        .enumerate()
        .any(|(i, e)| drawn(i) && e.can_shdnt.is_false());
    let needs_true = opts.include_shd
        && graph
            .entries()
            .iter()
            .enumerate()
            .any(|(i, e)| drawn(i) && e.shd.is_true());
    if needs_true {
        out.push_str("  const_true [label=\"TRUE\", shape=plaintext];\n");
    }
    if needs_false {
        out.push_str("  const_false [label=\"FALSE\", shape=plaintext];\n");
    }

    for (act, entry) in graph.entries().iter().enumerate() {
        if !drawn(act) {
            continue;
        }
        // constant TRUE can is the default and draws nothing
        if entry.can_shdnt.is_false() {
            let _ = writeln!(out, "  const_false -> a{act};");
        } else if !entry.can_shdnt.is_true() {
            for (k, clause) in entry.can_shdnt.clauses().iter().enumerate() {
                write_clause(&mut out, &format!("c{act}_{k}"), clause, act, false, opts);
            }
        }
        if opts.include_shd {
            if entry.shd.is_true() {
                let _ = writeln!(out, "  const_true -> a{act} [color=blue];");
            } else {
                for (k, clause) in entry.shd.clauses().iter().enumerate() {
                    write_clause(&mut out, &format!("s{act}_{k}"), clause, act, true, opts);
                }
            }
        }
    }
    out.push_str("}\n");
    out
}

fn dot_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn unquote(s: &str, line: usize) -> Result<String> {
    let inner = s
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .ok_or_else(|| dot_error(line, "expected a quoted string"))?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some(other) => out.push(other),
                None => return Err(dot_error(line, "dangling escape")),
            }
        } else {
            out.push(c);
        }
    }
    Ok(out)
}

fn parse_act_id(id: &str, line: usize) -> Result<usize> {
    id.strip_prefix('a')
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| dot_error(line, format!("expected an act node, found `{id}`")))
}

/// `c3_1` → (can, act 3, clause 1); `s3_1` → (shd, act 3, clause 1).
fn parse_clause_id(id: &str) -> Option<(bool, usize, usize)> {
    let shd = match id.as_bytes().first()? {
        b'c' => false,
        b's' => true,
        _ => return None,
    };
    let (act, k) = id[1..].split_once('_')?;
    Some((shd, act.parse().ok()?, k.parse().ok()?))
}

/// Rebuilds a graph from `to_dot` output produced with the default options.
/// Metadata is not part of the export and comes back empty.
pub fn from_dot(text: &str) -> Result<TodFlowGraph> {
    let mut domain = None;
    let mut labels: Vec<(usize, String)> = Vec::new();
    // (shd, act) -> clause id -> literals
    let mut clauses: BTreeMap<(bool, usize), BTreeMap<usize, Vec<Literal>>> = BTreeMap::new();
    let mut can_false = Vec::new();
    let mut shd_true = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.trim();
        if line.is_empty() || line == "}" || line.starts_with("rankdir") || line.starts_with("node ") {
            continue;
        }
        if let Some(rest) = line.strip_prefix("digraph ") {
            let name = rest.trim_end_matches('{').trim();
            domain = Some(unquote(name, line_no)?);
            continue;
        }
        let body = line
            .strip_suffix(';')
            .ok_or_else(|| dot_error(line_no, "statement must end with `;`"))?;
        let (stmt, attrs) = match body.find(" [") {
            Some(p) => (&body[..p], body[p + 2..].trim_end_matches(']')),
            None => (body, ""),
        };
        if let Some((from, to)) = stmt.split_once(" -> ") {
            let dashed = attrs.contains("style=dashed");
            match (from, parse_clause_id(to)) {
                ("const_false", _) => can_false.push(parse_act_id(to, line_no)?),
                ("const_true", _) => shd_true.push(parse_act_id(to, line_no)?),
                (_, Some((shd, act, k))) => {
                    let lit = Literal {
                        act: parse_act_id(from, line_no)?,
                        negated: dashed,
                    };
                    clauses.entry((shd, act)).or_default().entry(k).or_default().push(lit);
                }
                // clause -> target edges are implied by the clause id
                _ if parse_clause_id(from).is_some() => {}
                _ => return Err(dot_error(line_no, format!("unexpected edge `{stmt}`"))),
            }
        } else if let Some((shd, act, k)) = parse_clause_id(stmt) {
            clauses.entry((shd, act)).or_default().entry(k).or_default();
        } else if stmt.starts_with("const_") {
        } else {
            let act = parse_act_id(stmt, line_no)?;
            let label = attrs
                .strip_prefix("label=")
                .ok_or_else(|| dot_error(line_no, "act node without a label"))?;
            labels.push((act, unquote(label, line_no)?));
        }
    }

    let domain = domain.ok_or_else(|| dot_error(1, "missing `digraph` header"))?;
    labels.sort_by_key(|(i, _)| *i);
    if labels.iter().enumerate().any(|(k, (i, _))| k != *i) {
        return Err(dot_error(0, "act node ids are not contiguous"));
    }
    let vocabulary = ActVocabulary::from_labels(labels.iter().map(|(_, l)| l))?;
    let n = vocabulary.len();
    let mut entries = vec![ActConditions::default(); n];
    for ((shd, act), by_id) in clauses {
        let entry = entries
            .get_mut(act)
            .ok_or_else(|| Error::vocab(format!("clause for unknown act {act}")))?;
        let cond = DnfCondition::from_clauses(by_id.into_values().map(Clause::new));
        if shd {
            entry.shd = cond;
        } else {
            entry.can_shdnt = cond;
        }
    }
    for act in can_false {
        entries
            .get_mut(act)
            .ok_or_else(|| Error::vocab(format!("unknown act {act}")))?
            .can_shdnt = DnfCondition::never();
    }
    for act in shd_true {
        entries
            .get_mut(act)
            .ok_or_else(|| Error::vocab(format!("unknown act {act}")))?
            .shd = DnfCondition::always();
    }
    TodFlowGraph::from_parts(domain, vocabulary, entries, GraphMetadata::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc_graph() -> TodFlowGraph {
        let v = ActVocabulary::from_labels(["A", "B", "C"]).unwrap();
        let mut g = TodFlowGraph::new("d", v);
        g.set_entry(
            2,
            ActConditions {
                can_shdnt: DnfCondition::conjunction([Literal::pos(0), Literal::pos(1)]),
                ..ActConditions::default()
            },
        )
        .unwrap();
        g
    }

    #[test]
    fn and_node_edges() {
        let dot = to_dot(&abc_graph(), &DotOptions::default());
        assert!(dot.contains("  a0 -> c2_0;\n"));
        assert!(dot.contains("  a1 -> c2_0;\n"));
        assert!(dot.contains("  c2_0 -> a2;\n"));
        assert!(dot.contains("c2_0 [label=\"&\""));
    }

    #[test]
    fn negative_literal_is_dashed() {
        let mut g = abc_graph();
        g.set_entry(
            1,
            ActConditions {
                can_shdnt: DnfCondition::literal(Literal::neg(0)),
                ..ActConditions::default()
            },
        )
        .unwrap();
        let dot = to_dot(&g, &DotOptions::default());
        assert!(dot.contains("  a0 -> c1_0 [style=dashed];\n"));
        let hidden = to_dot(
            &g,
            &DotOptions {
                include_negative_edges: false,
                ..DotOptions::default()
            },
        );
        assert!(!hidden.contains("dashed"));
    }

    #[test]
    fn empty_graph_is_header_only() {
        let g = TodFlowGraph::new("empty", ActVocabulary::new());
        assert_eq!(to_dot(&g, &DotOptions::default()), "digraph \"empty\" {\n}\n");
    }

    #[test]
    fn round_trip_with_constants_and_quotes() {
        let v = ActVocabulary::from_labels(["SYSTEM say \"hi\"", "B", "C"]).unwrap();
        let mut g = TodFlowGraph::new("d", v);
        g.set_entry(
            0,
            ActConditions {
                can_shdnt: DnfCondition::never(),
                shd: DnfCondition::always(),
                can_only: None,
            },
        )
        .unwrap();
        g.set_entry(
            2,
            ActConditions {
                can_shdnt: DnfCondition::from_clauses([
                    Clause::new([Literal::pos(0), Literal::neg(1)]),
                    Clause::new([Literal::pos(1)]),
                ]),
                shd: DnfCondition::literal(Literal::pos(1)),
                can_only: None,
            },
        )
        .unwrap();
        let back = from_dot(&to_dot(&g, &DotOptions::default())).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn output_is_deterministic() {
        let g = abc_graph();
        assert_eq!(to_dot(&g, &DotOptions::default()), to_dot(&g.clone(), &DotOptions::default()));
    }
}
