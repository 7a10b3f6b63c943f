use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvolveError;
use crate::graph::rewrite::supersede_into;
use crate::graph::{reserved, ContentId, ElementKind, UnifiedGraph};
use crate::pass::{ensure_relation, PassContext};
use crate::provenance::EdgeKind;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifyReport {
    pub types: usize,
    pub attributes: usize,
    pub instances: usize,
    pub value_triples: usize,
}

/// Folds tables into types, columns into attributes, rows into instances
/// and cells into attribute triples.
pub fn unify_types(
    graph: &UnifiedGraph,
    ctx: &mut PassContext<'_>,
) -> Result<(UnifiedGraph, UnifyReport), EvolveError> {
    let mut next = graph.clone();
    let mut report = UnifyReport::default();
    let tables: Vec<_> = graph.active_of_kind(ElementKind::Table).cloned().collect();
    if tables.is_empty() {
        return Ok((next, report));
    }
    let instance_of = ensure_relation::<EvolveError>(&mut next, ctx, reserved::INSTANCE_OF)?;
    let origin = ctx.transform.clone();
    let mut map: BTreeMap<ContentId, ContentId> = BTreeMap::new();
    let mut cells = Vec::new();

    for table in &tables {
        let ty = next.add_element(ElementKind::TypeNode, table.parents.clone(), table.payload.as_str(), &origin)?;
        next.reactivate(ty);
        map.insert(table.id, ty);
        report.types += 1;
        let children: Vec<_> = graph
            .children(&table.id)
            .filter(|c| graph.is_active(&c.id))
            .cloned()
            .collect();
        for child in children {
            match child.kind {
                ElementKind::Column => {
                    let attr =
                        next.add_element(ElementKind::RelationType, vec![ty], child.payload.as_str(), &origin)?;
                    next.reactivate(attr);
                    map.insert(child.id, attr);
                    report.attributes += 1;
                }
                ElementKind::Row => {
                    let inst =
                        next.add_element(ElementKind::InstanceNode, vec![ty], child.payload.as_str(), &origin)?;
                    next.reactivate(inst);
                    next.add_triple(instance_of, inst, ty)?;
                    map.insert(child.id, inst);
                    report.instances += 1;
                    cells.extend(
                        graph
                            .children(&child.id)
                            .filter(|c| c.kind == ElementKind::Cell && graph.is_active(&c.id))
                            .cloned(),
                    );
                }
                _ => {}
            }
        }
    }

    for cell in &cells {
        let (row, col) = (cell.parents[0], cell.parents[1]);
        let (Some(&inst), Some(&attr)) = (map.get(&row), map.get(&col)) else {
            continue;
        };
        let value = next.add_element(ElementKind::Value, vec![], cell.payload.as_str(), &origin)?;
        next.reactivate(value);
        let t = next.add_triple(attr, inst, value)?;
        next.supersede(cell.id);
        ctx.trace_step("cell", vec![cell.id], vec![t], EdgeKind::Renamed)?;
        ctx.trace_step("value", vec![cell.id], vec![value], EdgeKind::Derived)?;
        report.value_triples += 1;
    }

    supersede_into(&mut next, &map)?;
    for (old, new) in &map {
        ctx.trace(vec![*old], vec![*new], EdgeKind::Renamed)?;
    }
    Ok((next, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::content_id;
    use crate::provenance::{ProvenanceStore, RunId};

    fn build(rows: &[&[&str]]) -> UnifiedGraph {
        let mut g = UnifiedGraph::new();
        let ds = g.add_element(ElementKind::Dataset, vec![], "S", "x").unwrap();
        let t = g.add_element(ElementKind::Table, vec![ds], "t", "x").unwrap();
        let cols: Vec<_> = ["a", "b"]
            .iter()
            .map(|c| g.add_element(ElementKind::Column, vec![t], *c, "x").unwrap())
            .collect();
        for (i, row) in rows.iter().enumerate() {
            let r = g.add_element(ElementKind::Row, vec![t], i.to_string(), "x").unwrap();
            for (v, c) in row.iter().zip(&cols) {
                g.add_element(ElementKind::Cell, vec![r, *c], *v, "x").unwrap();
            }
        }
        g
    }

    fn unify(g: &UnifiedGraph, store: &mut ProvenanceStore) -> (UnifiedGraph, UnifyReport) {
        let mut ctx = PassContext::new(store, RunId(content_id(b"r")), "unify_types");
        unify_types(g, &mut ctx).unwrap()
    }

    #[test]
    fn counts_for_one_row() {
        let g = build(&[&["1", "2"]]);
        let mut store = ProvenanceStore::new();
        let (u, r) = unify(&g, &mut store);
        assert_eq!(u.active_of_kind(ElementKind::TypeNode).count(), 1);
        assert_eq!(u.active_of_kind(ElementKind::InstanceNode).count(), 1);
        // Two attributes plus the instanceOf relation.
        assert_eq!(u.active_of_kind(ElementKind::RelationType).count(), 3);
        assert_eq!(u.triples_with_predicate(reserved::instance_of()).count(), 1);
        assert_eq!(r.value_triples, 2);
        for kind in [ElementKind::Table, ElementKind::Column, ElementKind::Row, ElementKind::Cell] {
            assert_eq!(u.active_of_kind(kind).count(), 0, "{kind:?}");
        }
        assert!(u.check_closure().is_ok());
    }

    #[test]
    fn empty_table_becomes_type_without_instances() {
        let g = build(&[]);
        let mut store = ProvenanceStore::new();
        let (u, r) = unify(&g, &mut store);
        assert_eq!(r.types, 1);
        assert_eq!(r.instances, 0);
        assert_eq!(u.triples_with_predicate(reserved::instance_of()).count(), 0);
    }

    #[test]
    fn old_elements_alias_to_successors() {
        let g = build(&[&["1", "2"]]);
        let mut store = ProvenanceStore::new();
        let (u, _) = unify(&g, &mut store);
        let table = g.active_of_kind(ElementKind::Table).next().unwrap().id;
        let resolved = store.resolve_alias(table).unwrap();
        assert_eq!(u.element(&resolved).unwrap().kind, ElementKind::TypeNode);
        let cell = g.active_of_kind(ElementKind::Cell).next().unwrap().id;
        assert!(u.triple(&store.resolve_alias(cell).unwrap()).is_some());
    }
}
