//! GraphViz DOT export.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::graph::DedupGraph;
use crate::ingest::ProjectNames;
use crate::ProjectId;

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

fn label(names: &ProjectNames, id: ProjectId) -> String {
    match names.name(id) {
        Some(n) => quote(n),
        None => quote(&id.to_string()),
    }
}

/// Renders `g` as an undirected DOT graph labelled by project name: node
/// statements first, then edges. With a node filter only the induced
/// subgraph is written; an empty filter yields an empty graph.
pub fn export_dot(
    g: &DedupGraph,
    names: &ProjectNames,
    nodes: Option<&HashSet<ProjectId>>,
) -> String {
    let keep = |id: ProjectId| nodes.is_none_or(|set| set.contains(&id));
    let mut out = String::from("graph dedup {\n");
    for &id in g.nodes() {
        if keep(id) {
            let _ = writeln!(out, "  {};", label(names, id));
        }
    }
    for e in g.edges() {
        if keep(e.a) && keep(e.b) {
            let _ = writeln!(
                out,
                "  {} -- {} [provenance={}];",
                label(names, e.a),
                label(names, e.b),
                e.provenance
            );
        }
    }
    out.push_str("}\n");
    out
}
