//! Successor construction shared by the evolve passes.

use std::collections::{BTreeMap, BTreeSet};

use super::{ContentId, GraphError, UnifiedGraph};

/// Replaces element payloads, re-deriving every active descendant whose id
/// depends on a changed parent. Old elements are superseded and triples are
/// re-pointed. Returns the old → new id map.
pub(crate) fn rewrite_payloads(
    graph: &mut UnifiedGraph,
    overrides: &BTreeMap<ContentId, String>,
    origin: &str,
) -> Result<BTreeMap<ContentId, ContentId>, GraphError> {
    let mut affected = BTreeSet::new();
    let mut stack: Vec<ContentId> = overrides.keys().copied().collect();
    while let Some(id) = stack.pop() {
        if !graph.is_active(&id) || !affected.insert(id) {
            continue;
        }
        stack.extend(graph.children(&id).map(|c| c.id));
    }

    let mut depth: BTreeMap<ContentId, usize> = BTreeMap::new();
    for id in &affected {
        depth_of(graph, *id, &affected, &mut depth);
    }
    let mut order: Vec<_> = affected.iter().map(|id| (depth[id], *id)).collect();
    order.sort();

    let mut map = BTreeMap::new();
    for (_, old) in order {
        let e = graph.element(&old).expect("affected element exists").clone();
        let parents: Vec<_> = e
            .parents
            .iter()
            .map(|p| *map.get(p).unwrap_or(p))
            .collect();
        let payload = overrides.get(&old).cloned().unwrap_or_else(|| e.payload.clone());
        if parents == e.parents && payload == e.payload {
            continue;
        }
        let new = graph.add_element(e.kind, parents, payload, origin)?;
        if new != old {
            graph.supersede(old);
            graph.reactivate(new);
            map.insert(old, new);
        }
    }
    repoint(graph, &map)?;
    Ok(map)
}

fn depth_of(
    graph: &UnifiedGraph,
    id: ContentId,
    affected: &BTreeSet<ContentId>,
    memo: &mut BTreeMap<ContentId, usize>,
) -> usize {
    if let Some(d) = memo.get(&id) {
        return *d;
    }
    let d = graph
        .element(&id)
        .map(|e| {
            e.parents
                .iter()
                .filter(|p| affected.contains(p))
                .map(|p| depth_of(graph, *p, affected, memo) + 1)
                .max()
                .unwrap_or(0)
        })
        .unwrap_or(0);
    memo.insert(id, d);
    d
}

/// Supersedes every key of `map` and moves its triples onto the mapped id.
pub(crate) fn supersede_into(
    graph: &mut UnifiedGraph,
    map: &BTreeMap<ContentId, ContentId>,
) -> Result<(), GraphError> {
    for (old, new) in map {
        if old != new {
            graph.supersede(*old);
        }
    }
    repoint(graph, map)
}

/// Re-points every triple mentioning a mapped id.
pub(crate) fn repoint(
    graph: &mut UnifiedGraph,
    map: &BTreeMap<ContentId, ContentId>,
) -> Result<(), GraphError> {
    let touched: BTreeSet<ContentId> = map
        .keys()
        .flat_map(|id| graph.triples_mentioning(*id))
        .collect();
    let mut replacements = Vec::with_capacity(touched.len());
    for id in touched {
        if let Some(t) = graph.remove_triple(id) {
            let m = |x: ContentId| *map.get(&x).unwrap_or(&x);
            replacements.push((m(t.predicate), m(t.subject), m(t.object)));
        }
    }
    replacements.sort();
    for (p, s, o) in replacements {
        graph.add_triple(p, s, o)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ElementKind;

    #[test]
    fn renaming_a_table_cascades_to_cells_and_triples() {
        let mut g = UnifiedGraph::new();
        let table = g.add_element(ElementKind::Table, vec![], "t", "x").unwrap();
        let col = g.add_element(ElementKind::Column, vec![table], "c", "x").unwrap();
        let row = g.add_element(ElementKind::Row, vec![table], "0", "x").unwrap();
        let cell = g.add_element(ElementKind::Cell, vec![row, col], "v", "x").unwrap();
        let rel = g.add_element(ElementKind::RelationType, vec![], "r", "x").unwrap();
        g.add_triple(rel, col, col).unwrap();

        let overrides = BTreeMap::from([(table, "renamed".to_string())]);
        let map = rewrite_payloads(&mut g, &overrides, "rename").unwrap();
        assert_eq!(map.len(), 4);
        for old in [table, col, row, cell] {
            assert!(g.is_superseded(&old));
            assert!(g.is_active(&map[&old]));
        }
        let new_col = map[&col];
        assert!(g.has_triple(rel, new_col, new_col));
        assert!(!g.has_triple(rel, col, col));
        assert!(g.check_closure().is_ok());
    }

    #[test]
    fn unchanged_payload_is_a_fixed_point() {
        let mut g = UnifiedGraph::new();
        let v = g.add_element(ElementKind::Value, vec![], "a", "x").unwrap();
        let before = g.clone();
        let map = rewrite_payloads(&mut g, &BTreeMap::from([(v, "a".into())]), "o").unwrap();
        assert!(map.is_empty());
        assert_eq!(g, before);
    }
}
