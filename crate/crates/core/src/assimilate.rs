//! Assimilation of evolved slice graphs into one cross-project model.
//!
//! Identity is content identity: an element already in the model is reused,
//! anything else is inserted. Nothing is matched by similarity here.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::graph::{ContentId, Element, GraphError, UnifiedGraph};
use crate::onto::{categories_of, is_seeded};
use crate::pass::PassContext;
use crate::provenance::{EdgeKind, ProvenanceError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssimilateError {
    #[error("{id} is classified as {model_categories:?} in the model but {slice_categories:?} in the slice")]
    CategoryClash {
        id: ContentId,
        model_categories: Vec<ContentId>,
        slice_categories: Vec<ContentId>,
    },
    #[error("slice {0} is not seeded")]
    NotSeeded(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Provenance(#[from] ProvenanceError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssimilatedModel {
    pub graph: UnifiedGraph,
    /// Slice element id → model element id.
    pub registry: BTreeMap<ContentId, ContentId>,
    /// Slices each model element came from.
    pub membership: BTreeMap<ContentId, BTreeSet<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssimilateReport {
    pub inserted_elements: usize,
    pub reused_elements: usize,
    pub inserted_triples: usize,
    pub changed: bool,
}

impl AssimilatedModel {
    pub fn new() -> Self {
        Self::default()
    }
}

fn insert(
    model: &mut UnifiedGraph,
    slice: &UnifiedGraph,
    e: &Element,
    done: &mut BTreeSet<ContentId>,
) -> Result<(), GraphError> {
    if !done.insert(e.id) {
        return Ok(());
    }
    for p in &e.parents {
        if let Some(parent) = slice.element(p) {
            insert(model, slice, parent, done)?;
        }
    }
    model.add_element(e.kind, e.parents.clone(), e.payload.as_str(), e.origin.as_str())?;
    Ok(())
}

pub fn assimilate(
    model: &AssimilatedModel,
    slice_name: &str,
    slice: &UnifiedGraph,
    ctx: &mut PassContext<'_>,
) -> Result<(AssimilatedModel, AssimilateReport), AssimilateError> {
    if !is_seeded(slice) {
        return Err(AssimilateError::NotSeeded(slice_name.to_string()));
    }
    let model_cats = categories_of(&model.graph);
    let slice_cats = categories_of(slice);
    for (id, cats) in &slice_cats {
        if let Some(existing) = model_cats.get(id) {
            let (mut a, mut b) = (existing.clone(), cats.clone());
            a.sort();
            b.sort();
            if a != b {
                return Err(AssimilateError::CategoryClash {
                    id: *id,
                    model_categories: a,
                    slice_categories: b,
                });
            }
        }
    }

    let mut next = model.clone();
    let mut report = AssimilateReport::default();
    let mut done = BTreeSet::new();
    for e in slice.elements() {
        let existed = next.graph.contains(&e.id);
        insert(&mut next.graph, slice, e, &mut done)?;
        if existed {
            report.reused_elements += 1;
            if slice.is_active(&e.id) {
                next.graph.reactivate(e.id);
            }
        } else {
            report.inserted_elements += 1;
            if slice.is_superseded(&e.id) {
                next.graph.supersede(e.id);
            }
        }
        next.registry.insert(e.id, e.id);
        next.membership
            .entry(e.id)
            .or_default()
            .insert(slice_name.to_string());
    }
    for t in slice.triples() {
        if next.graph.triple(&t.id).is_none() {
            next.graph.add_triple(t.predicate, t.subject, t.object)?;
            report.inserted_triples += 1;
        }
    }

    let (before, after) = (model.graph.graph_id(), next.graph.graph_id());
    report.changed = before != after;
    let slice_id = slice.graph_id();
    if report.changed && slice_id != after {
        ctx.trace(vec![slice_id], vec![after], EdgeKind::Merged)?;
    }
    Ok((next, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{content_id, reserved, ElementKind};
    use crate::onto::apply_seed;
    use crate::provenance::{ProvenanceStore, RunId};

    fn slice(types: &[&str]) -> UnifiedGraph {
        let mut g = UnifiedGraph::new();
        for t in types {
            g.add_element(ElementKind::TypeNode, vec![], *t, "x").unwrap();
        }
        let mut store = ProvenanceStore::new();
        let mut ctx = PassContext::new(&mut store, RunId(content_id(b"r")), "seed");
        apply_seed(&g, &mut ctx).unwrap().0
    }

    fn run(m: &AssimilatedModel, name: &str, g: &UnifiedGraph) -> Result<AssimilatedModel, AssimilateError> {
        let mut store = ProvenanceStore::new();
        let mut ctx = PassContext::new(&mut store, RunId(content_id(b"r")), "assimilate");
        assimilate(m, name, g, &mut ctx).map(|(m, _)| m)
    }

    #[test]
    fn empty_model_takes_the_graph_with_identity_registry() {
        let g = slice(&["A"]);
        let m = run(&AssimilatedModel::new(), "s", &g).unwrap();
        assert_eq!(m.graph, g);
        assert!(m.registry.iter().all(|(k, v)| k == v));
        assert_eq!(m.registry.len(), g.element_count());
    }

    #[test]
    fn assimilating_twice_is_a_no_op() {
        let g = slice(&["A"]);
        let m1 = run(&AssimilatedModel::new(), "s", &g).unwrap();
        let m2 = run(&m1, "s", &g).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn disjoint_slices_commute_and_share_seed() {
        let (a, b) = (slice(&["A"]), slice(&["B"]));
        let ab = run(&run(&AssimilatedModel::new(), "a", &a).unwrap(), "b", &b).unwrap();
        let ba = run(&run(&AssimilatedModel::new(), "b", &b).unwrap(), "a", &a).unwrap();
        assert_eq!(ab, ba);
        let both: BTreeSet<String> = ["a".to_string(), "b".to_string()].into();
        assert_eq!(ab.membership[&reserved::individual()], both);
    }

    #[test]
    fn unseeded_and_clashing_slices_are_rejected() {
        let m = run(&AssimilatedModel::new(), "a", &slice(&["A"])).unwrap();
        assert!(matches!(run(&m, "x", &UnifiedGraph::new()), Err(AssimilateError::NotSeeded(_))));

        let mut clash = slice(&[]);
        let t = clash.add_element(ElementKind::TypeNode, vec![], "A", "x").unwrap();
        clash.add_triple(reserved::instance_of(), t, reserved::individual()).unwrap();
        assert!(matches!(run(&m, "c", &clash), Err(AssimilateError::CategoryClash { .. })));
    }
}
