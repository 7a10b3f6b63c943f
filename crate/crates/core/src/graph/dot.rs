use std::collections::BTreeSet;
use std::fmt::Write;

use super::{reserved, ElementKind, UnifiedGraph};

const PAYLOAD_PREFIX_CHARS: usize = 24;

/// Which elements an export includes.
#[derive(Debug, Clone, Default)]
pub struct DotFilter {
    pub include_superseded: bool,
    /// When set, only these kinds are drawn.
    pub kinds: Option<BTreeSet<ElementKind>>,
}

impl DotFilter {
    pub fn all() -> Self {
        DotFilter {
            include_superseded: true,
            kinds: None,
        }
    }

    pub fn active() -> Self {
        DotFilter::default()
    }
}

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            _ => out.push(c),
        }
    }
    out
}

pub(super) fn render(graph: &UnifiedGraph, filter: &DotFilter) -> String {
    let keep = |id| {
        let Some(e) = graph.element(id) else {
            return false;
        };
        (filter.include_superseded || !graph.is_superseded(id))
            && filter.kinds.as_ref().is_none_or(|k| k.contains(&e.kind))
    };
    // Relations that only ever act as predicates are drawn as edge labels.
    let endpoint_ids: BTreeSet<_> = graph
        .triples()
        .flat_map(|t| [t.subject, t.object])
        .collect();
    let nodes: BTreeSet<_> = graph
        .elements()
        .filter(|e| keep(&e.id))
        .filter(|e| {
            !(e.kind == ElementKind::RelationType
                && !endpoint_ids.contains(&e.id)
                && graph.triples_with_predicate(e.id).next().is_some())
        })
        .map(|e| e.id)
        .collect();

    let mut out = String::from("digraph g {\n");
    for id in &nodes {
        let e = graph.element(id).expect("node drawn from graph");
        let prefix: String = e.payload.chars().take(PAYLOAD_PREFIX_CHARS).collect();
        let dashed = if graph.is_superseded(id) { ", style=dashed" } else { "" };
        let _ = writeln!(
            out,
            "  \"{}\" [label=\"{}:{}:{}\"{}];",
            id,
            e.kind,
            id.short(),
            escape(&prefix),
            dashed
        );
    }
    let mut edges = Vec::new();
    for id in &nodes {
        let e = graph.element(id).expect("node drawn from graph");
        for parent in &e.parents {
            if nodes.contains(parent) {
                edges.push(format!("  \"{id}\" -> \"{parent}\" [style=dotted];\n"));
            }
        }
    }
    for t in graph.triples() {
        if nodes.contains(&t.subject) && nodes.contains(&t.object) {
            let label = graph
                .element(&t.predicate)
                .map(|p| reserved::label(&p.payload).to_string())
                .unwrap_or_default();
            edges.push(format!(
                "  \"{}\" -> \"{}\" [label=\"{}\"];\n",
                t.subject,
                t.object,
                escape(&label)
            ));
        }
    }
    edges.sort();
    for edge in edges {
        out.push_str(&edge);
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph() {
        assert_eq!(UnifiedGraph::new().export_dot(&DotFilter::all()), "digraph g {\n}\n");
    }

    #[test]
    fn one_triple_two_nodes_one_edge() {
        let mut g = UnifiedGraph::new();
        let rel = g
            .add_element(ElementKind::RelationType, vec![], reserved::DEBIT_REL, "t")
            .unwrap();
        let a = g.add_element(ElementKind::Value, vec![], "txn1", "t").unwrap();
        let b = g.add_element(ElementKind::Value, vec![], "Acme \"Co\"", "t").unwrap();
        g.add_triple(rel, a, b).unwrap();
        let dot = g.export_dot(&DotFilter::all());
        assert_eq!(dot.matches("[label=").count(), 3);
        assert_eq!(dot.matches(" -> ").count(), 1);
        assert!(dot.contains("[label=\"debitRel\"]"));
        assert!(dot.contains(&format!("Value:{}:Acme \\\"Co\\\"", b.short())));
        assert_eq!(dot, g.export_dot(&DotFilter::all()));
    }

    #[test]
    fn superseded_hidden_from_active_view() {
        let mut g = UnifiedGraph::new();
        let a = g.add_element(ElementKind::Value, vec![], "a", "t").unwrap();
        g.supersede(a);
        assert_eq!(g.export_dot(&DotFilter::active()), "digraph g {\n}\n");
        assert!(g.export_dot(&DotFilter::all()).contains("style=dashed"));
    }
}
