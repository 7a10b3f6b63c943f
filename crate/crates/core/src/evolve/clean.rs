use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use super::EvolveError;
use crate::graph::rewrite::rewrite_payloads;
use crate::graph::{ContentId, ElementKind, UnifiedGraph};
use crate::pass::PassContext;
use crate::provenance::EdgeKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CleanKind {
    Trim,
    NfcNormalize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanChange {
    pub before: ContentId,
    pub after: ContentId,
    pub kinds: Vec<CleanKind>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub changes: Vec<CleanChange>,
}

/// Trim plus NFC, repeated to a fixed point, with the kinds that applied.
pub fn clean_text(text: &str) -> (String, Vec<CleanKind>) {
    let mut kinds = Vec::new();
    let mut current = text.to_string();
    loop {
        let trimmed = current.trim();
        let mut next = trimmed.to_string();
        if trimmed.len() != current.len() && !kinds.contains(&CleanKind::Trim) {
            kinds.push(CleanKind::Trim);
        }
        let composed: String = next.nfc().collect();
        if composed != next {
            if !kinds.contains(&CleanKind::NfcNormalize) {
                kinds.push(CleanKind::NfcNormalize);
            }
            next = composed;
        }
        if next == current {
            kinds.sort();
            return (current, kinds);
        }
        current = next;
    }
}

pub fn clean_pass(
    graph: &UnifiedGraph,
    ctx: &mut PassContext<'_>,
) -> Result<(UnifiedGraph, CleanReport), EvolveError> {
    let mut kinds_by_cell = BTreeMap::new();
    let mut overrides = BTreeMap::new();
    for cell in graph.active_of_kind(ElementKind::Cell) {
        let (cleaned, kinds) = clean_text(&cell.payload);
        if !kinds.is_empty() {
            overrides.insert(cell.id, cleaned);
            kinds_by_cell.insert(cell.id, kinds);
        }
    }
    let mut next = graph.clone();
    if overrides.is_empty() {
        return Ok((next, CleanReport::default()));
    }
    let map = rewrite_payloads(&mut next, &overrides, &ctx.transform)?;
    let mut report = CleanReport::default();
    for (before, after) in map {
        ctx.trace(vec![before], vec![after], EdgeKind::Cleaned)?;
        report.changes.push(CleanChange {
            before,
            after,
            kinds: kinds_by_cell.remove(&before).unwrap_or_default(),
        });
    }
    Ok((next, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::content_id;
    use crate::provenance::{ProvenanceStore, RunId};
    use proptest::prelude::*;

    fn one_cell(text: &str) -> (UnifiedGraph, ContentId) {
        let mut g = UnifiedGraph::new();
        let t = g.add_element(ElementKind::Table, vec![], "t", "x").unwrap();
        let c = g.add_element(ElementKind::Column, vec![t], "c", "x").unwrap();
        let r = g.add_element(ElementKind::Row, vec![t], "0", "x").unwrap();
        let cell = g.add_element(ElementKind::Cell, vec![r, c], text, "x").unwrap();
        (g, cell)
    }

    fn run(g: &UnifiedGraph, store: &mut ProvenanceStore) -> (UnifiedGraph, CleanReport) {
        let mut ctx = PassContext::new(store, RunId(content_id(b"r")), "clean_pass");
        clean_pass(g, &mut ctx).unwrap()
    }

    #[test]
    fn trims_and_records_one_cleaned_edge() {
        let (g, cell) = one_cell(" Sales ");
        let mut store = ProvenanceStore::new();
        let (g2, report) = run(&g, &mut store);
        assert_eq!(report.changes.len(), 1);
        let ch = &report.changes[0];
        assert_eq!(ch.before, cell);
        assert_eq!(g2.element(&ch.after).unwrap().payload, "Sales");
        assert_eq!(ch.kinds, vec![CleanKind::Trim]);
        assert!(g2.is_superseded(&cell));
        assert_eq!(store.len(), 1);
        assert_eq!(store.edges()[0].kind, EdgeKind::Cleaned);
        assert!(!g.is_superseded(&cell), "input graph untouched");
    }

    #[test]
    fn clean_graph_is_a_fixed_point() {
        let (g, _) = one_cell("Sales");
        let mut store = ProvenanceStore::new();
        let (g2, report) = run(&g, &mut store);
        assert_eq!(g2, g);
        assert!(report.changes.is_empty());
        assert!(store.is_empty());
    }

    #[test]
    fn decomposed_e_acute_is_composed() {
        let (g, _) = one_cell("Cafe\u{0301}");
        let mut store = ProvenanceStore::new();
        let (g2, report) = run(&g, &mut store);
        let after = &g2.element(&report.changes[0].after).unwrap().payload;
        // Composed form written out by code point.
        assert_eq!(after.chars().map(|c| c as u32).collect::<Vec<_>>(), vec![0x43, 0x61, 0x66, 0xE9]);
        assert_eq!(report.changes[0].kinds, vec![CleanKind::NfcNormalize]);
    }

    proptest! {
        #[test]
        fn clean_text_is_idempotent(s in "[ \\t\\u{a0}a-eé\\u{301}\\u{2000}]{0,12}") {
            let (once, _) = clean_text(&s);
            let (twice, kinds) = clean_text(&once);
            prop_assert_eq!(&once, &twice);
            prop_assert!(kinds.is_empty());
        }

        #[test]
        fn clean_pass_is_idempotent(s in "[ a\\u{301}e]{0,8}") {
            let (g, _) = one_cell(&s);
            let mut store = ProvenanceStore::new();
            let (g1, _) = run(&g, &mut store);
            let (g2, r2) = run(&g1, &mut store);
            prop_assert_eq!(g1, g2);
            prop_assert!(r2.changes.is_empty());
        }
    }
}
