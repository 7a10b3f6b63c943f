use std::collections::{BTreeMap, BTreeSet};

use super::seed::is_seeded;
use super::OntoError;
use crate::graph::{reserved, ContentId, ElementKind, UnifiedGraph};

fn is_attribute(graph: &UnifiedGraph, id: &ContentId) -> bool {
    graph.element(id).is_some_and(|e| {
        e.kind == ElementKind::RelationType
            && e.parents.len() == 1
            && graph
                .element(&e.parents[0])
                .is_some_and(|p| p.kind == ElementKind::TypeNode)
    })
}

/// "an" before a vowel letter, "a" otherwise.
pub fn article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn join(items: &BTreeSet<String>) -> String {
    items.iter().cloned().collect::<Vec<_>>().join(", ")
}

fn capitalized(word: &str) -> String {
    let mut c = word.chars();
    c.next()
        .map(|f| f.to_ascii_uppercase().to_string() + c.as_str())
        .unwrap_or_default()
}

/// A template definition for every active type.
pub fn extract_definitions(graph: &UnifiedGraph) -> Result<BTreeMap<ContentId, String>, OntoError> {
    if !is_seeded(graph) {
        return Err(OntoError::NotSeeded);
    }
    let type_label = reserved::label(reserved::TYPE).to_string();
    let mut out = BTreeMap::new();
    for ty in graph.active_of_kind(ElementKind::TypeNode) {
        let supertypes: BTreeSet<String> = graph
            .triples_with_subject(ty.id)
            .filter(|t| t.predicate == reserved::subtype_of())
            .filter_map(|t| graph.element(&t.object))
            .map(|s| reserved::label(&s.payload).to_string())
            .collect();
        let genus = supertypes.first().cloned().unwrap_or_else(|| type_label.clone());

        let attributes: BTreeSet<String> = graph
            .children(&ty.id)
            .filter(|c| c.kind == ElementKind::RelationType && graph.is_active(&c.id))
            .map(|c| c.payload.clone())
            .collect();

        let mut relations = BTreeSet::new();
        for inst in graph
            .triples_with_object(ty.id)
            .filter(|t| t.predicate == reserved::instance_of())
            .map(|t| t.subject)
        {
            for t in graph.triples_with_subject(inst) {
                if t.predicate == reserved::instance_of() || is_attribute(graph, &t.predicate) {
                    continue;
                }
                if let Some(p) = graph.element(&t.predicate) {
                    relations.insert(reserved::label(&p.payload).to_string());
                }
            }
        }

        let has = if attributes.is_empty() {
            "no recorded attributes".to_string()
        } else {
            join(&attributes)
        };
        let mut text = format!(
            "{} {} is {} {genus} that has {has}",
            capitalized(article(&ty.payload)),
            ty.payload,
            article(&genus)
        );
        if !relations.is_empty() {
            text.push_str(" and participates in ");
            text.push_str(&join(&relations));
        }
        text.push('.');
        out.insert(ty.id, text);
    }
    Ok(out)
}

/// `label<TAB>definition` lines, sorted, identical lines collapsed.
pub fn export_definitions(graph: &UnifiedGraph, definitions: &BTreeMap<ContentId, String>) -> String {
    let lines: BTreeSet<String> = definitions
        .iter()
        .map(|(id, def)| {
            let label = graph.element(id).map(|e| e.payload.as_str()).unwrap_or("");
            format!("{label}\t{def}\n")
        })
        .collect();
    lines.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::content_id;
    use crate::onto::apply_seed;
    use crate::pass::PassContext;
    use crate::provenance::{ProvenanceStore, RunId};

    fn seeded(g: &UnifiedGraph) -> UnifiedGraph {
        let mut store = ProvenanceStore::new();
        let mut ctx = PassContext::new(&mut store, RunId(content_id(b"r")), "seed");
        apply_seed(g, &mut ctx).unwrap().0
    }

    #[test]
    fn degenerate_template() {
        let mut g = UnifiedGraph::new();
        let t = g.add_element(ElementKind::TypeNode, vec![], "T", "x").unwrap();
        let s = seeded(&g);
        let defs = extract_definitions(&s).unwrap();
        assert_eq!(defs[&t], "A T is a Type that has no recorded attributes.");
        assert_eq!(export_definitions(&s, &defs), "T\tA T is a Type that has no recorded attributes.\n");
    }

    #[test]
    fn attributes_relations_and_supertype() {
        let mut g = UnifiedGraph::new();
        let top = g.add_element(ElementKind::TypeNode, vec![], "Entry", "x").unwrap();
        let t = g.add_element(ElementKind::TypeNode, vec![], "Posting", "x").unwrap();
        for a in ["name", "amount"] {
            g.add_element(ElementKind::RelationType, vec![t], a, "x").unwrap();
        }
        let sub = g.add_element(ElementKind::RelationType, vec![], reserved::SUBTYPE_OF, "x").unwrap();
        g.add_triple(sub, t, top).unwrap();
        let inst_of = g.add_element(ElementKind::RelationType, vec![], reserved::INSTANCE_OF, "x").unwrap();
        let i = g.add_element(ElementKind::InstanceNode, vec![t], "0", "x").unwrap();
        g.add_triple(inst_of, i, t).unwrap();
        let debit = g.add_element(ElementKind::RelationType, vec![], reserved::DEBIT_REL, "x").unwrap();
        let v = g.add_element(ElementKind::Value, vec![], "Acme", "x").unwrap();
        g.add_triple(debit, i, v).unwrap();
        let s = seeded(&g);
        let defs = extract_definitions(&s).unwrap();
        assert_eq!(
            defs[&t],
            "A Posting is an Entry that has amount, name and participates in debitRel."
        );
        assert_eq!(extract_definitions(&s).unwrap(), defs);
    }

    #[test]
    fn articles_follow_the_first_letter() {
        assert_eq!(article("Account"), "an");
        assert_eq!(article("Posting"), "a");
        assert_eq!(article("Type"), "a");
    }

    #[test]
    fn unseeded_graph_is_rejected() {
        assert_eq!(extract_definitions(&UnifiedGraph::new()), Err(OntoError::NotSeeded));
    }
}
