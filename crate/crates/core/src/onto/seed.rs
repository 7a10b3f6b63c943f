use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::OntoError;
use crate::graph::{reserved, ContentId, ElementKind, UnifiedGraph};
use crate::pass::PassContext;
use crate::provenance::EdgeKind;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedReport {
    pub inserted: usize,
    pub classified: BTreeMap<String, usize>,
}

pub fn is_seeded(graph: &UnifiedGraph) -> bool {
    graph.contains(&reserved::individual())
}

fn category_for(kind: ElementKind) -> ContentId {
    match kind {
        ElementKind::TypeNode => reserved::type_category(),
        ElementKind::RelationType => reserved::tuple_category(),
        _ => reserved::individual(),
    }
}

/// Inserts the seed and classifies every active non-seed element under
/// exactly one seed category.
pub fn apply_seed(
    graph: &UnifiedGraph,
    ctx: &mut PassContext<'_>,
) -> Result<(UnifiedGraph, SeedReport), OntoError> {
    if is_seeded(graph) {
        return Err(OntoError::AlreadySeeded);
    }
    let mut next = graph.clone();
    let mut report = SeedReport::default();
    let mut seeded = Vec::new();
    for payload in reserved::SEED_CATEGORIES {
        seeded.push(next.add_element(ElementKind::SeedCategory, vec![], payload, &ctx.transform)?);
    }
    for payload in reserved::SEED_RELATIONS {
        let id = reserved::relation_id(payload);
        let fresh = !next.contains(&id);
        next.add_element(ElementKind::RelationType, vec![], payload, &ctx.transform)?;
        next.reactivate(id);
        if fresh || !ctx.store.mentions(&id) {
            seeded.push(id);
        }
    }
    report.inserted = seeded.len();
    ctx.trace(vec![], seeded, EdgeKind::Seeded)?;

    let instance_of = reserved::instance_of();
    let targets: Vec<(ContentId, ElementKind)> = next
        .active_elements()
        .filter(|e| !reserved::is_seed_element(&e.id))
        .map(|e| (e.id, e.kind))
        .collect();
    for (id, kind) in targets {
        let category = category_for(kind);
        next.add_triple(instance_of, id, category)?;
        let label = reserved::label(&next.element(&category).expect("seeded").payload).to_string();
        *report.classified.entry(label).or_default() += 1;
    }
    Ok((next, report))
}

/// Seed categories each element is classified under.
pub fn categories_of(graph: &UnifiedGraph) -> BTreeMap<ContentId, Vec<ContentId>> {
    let cats = [
        reserved::individual(),
        reserved::type_category(),
        reserved::tuple_category(),
    ];
    let mut out: BTreeMap<ContentId, Vec<ContentId>> = BTreeMap::new();
    for t in graph.triples_with_predicate(reserved::instance_of()) {
        if cats.contains(&t.object) {
            out.entry(t.subject).or_default().push(t.object);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::content_id;
    use crate::provenance::{ProvenanceStore, RunId};

    fn seed(g: &UnifiedGraph) -> Result<(UnifiedGraph, SeedReport), OntoError> {
        let mut store = ProvenanceStore::new();
        let mut ctx = PassContext::new(&mut store, RunId(content_id(b"r")), "apply_seed");
        apply_seed(g, &mut ctx)
    }

    #[test]
    fn empty_graph_gets_only_the_seed() {
        let (g, r) = seed(&UnifiedGraph::new()).unwrap();
        assert_eq!(g.active_of_kind(ElementKind::SeedCategory).count(), 3);
        assert_eq!(g.active_of_kind(ElementKind::RelationType).count(), 5);
        assert_eq!(r.inserted, 8);
        assert!(r.classified.is_empty());
        assert_eq!(g.triple_count(), 0);
    }

    #[test]
    fn every_element_classified_once_and_second_seed_rejected() {
        let mut g = UnifiedGraph::new();
        let t = g.add_element(ElementKind::TypeNode, vec![], "T", "x").unwrap();
        let a = g.add_element(ElementKind::RelationType, vec![t], "a", "x").unwrap();
        let i = g.add_element(ElementKind::InstanceNode, vec![t], "0", "x").unwrap();
        let (s, _) = seed(&g).unwrap();
        let cats = categories_of(&s);
        assert_eq!(cats[&t], vec![reserved::type_category()]);
        assert_eq!(cats[&a], vec![reserved::tuple_category()]);
        assert_eq!(cats[&i], vec![reserved::individual()]);
        for e in s.active_elements().filter(|e| !reserved::is_seed_element(&e.id)) {
            assert_eq!(cats[&e.id].len(), 1);
        }
        assert_eq!(seed(&s).unwrap_err(), OntoError::AlreadySeeded);
    }
}
