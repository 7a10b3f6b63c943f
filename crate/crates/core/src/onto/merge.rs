use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::OntoError;
use crate::graph::rewrite::supersede_into;
use crate::graph::{reserved, ContentId, ElementKind, UnifiedGraph};
use crate::pass::PassContext;
use crate::provenance::EdgeKind;
use crate::verify::{COMPANY, COUNTERPARTY, CREDIT, DEBIT, DR_CR};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mirror {
    #[serde(default)]
    pub counterparty_swap: bool,
    #[serde(default)]
    pub drcr_opposed: bool,
}

/// Declarative identity criterion over the instances of the types labelled
/// `scope`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityCriterion {
    pub scope: String,
    #[serde(default)]
    pub equal_attributes: Vec<String>,
    #[serde(default)]
    pub mirror: Mirror,
}

impl IdentityCriterion {
    pub fn from_json(text: &str) -> Result<Self, OntoError> {
        serde_json::from_str(text).map_err(|e| OntoError::BadCriterion(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeResult {
    pub merged: ContentId,
    pub sources: Vec<ContentId>,
}

/// An instance produced by merging carries its sources as parents.
pub fn is_merged(graph: &UnifiedGraph, id: &ContentId) -> bool {
    graph.element(id).is_some_and(|e| {
        e.kind == ElementKind::InstanceNode
            && !e.parents.is_empty()
            && e.parents
                .iter()
                .all(|p| graph.element(p).is_some_and(|pe| pe.kind == ElementKind::InstanceNode))
    })
}

/// Attribute values of one instance as seen through one type, by label.
pub(crate) fn view(graph: &UnifiedGraph, instance: ContentId, ty: ContentId) -> BTreeMap<String, String> {
    graph
        .triples_with_subject(instance)
        .filter_map(|t| {
            let attr = graph.element(&t.predicate)?;
            if attr.parents != [ty] || !graph.is_active(&attr.id) {
                return None;
            }
            Some((attr.payload.clone(), graph.element(&t.object)?.payload.clone()))
        })
        .collect()
}

/// Whether two attribute views satisfy the criterion. Symmetric by
/// construction.
pub fn matches(criterion: &IdentityCriterion, a: &BTreeMap<String, String>, b: &BTreeMap<String, String>) -> bool {
    fn get<'v>(v: &'v BTreeMap<String, String>, k: &str) -> &'v str {
        v.get(k).map(String::as_str).unwrap_or("")
    }
    let equal = criterion
        .equal_attributes
        .iter()
        .all(|k| !get(a, k).is_empty() && get(a, k) == get(b, k));
    let swap = !criterion.mirror.counterparty_swap
        || (!get(a, COUNTERPARTY).is_empty()
            && !get(b, COUNTERPARTY).is_empty()
            && get(a, COMPANY) == get(b, COUNTERPARTY)
            && get(a, COUNTERPARTY) == get(b, COMPANY));
    let opposed = !criterion.mirror.drcr_opposed || {
        let pair = (get(a, DR_CR), get(b, DR_CR));
        pair == (DEBIT, CREDIT) || pair == (CREDIT, DEBIT)
    };
    equal && swap && opposed
}

fn find(parent: &mut Vec<usize>, i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut c = i;
    while parent[c] != r {
        let n = parent[c];
        parent[c] = r;
        c = n;
    }
    r
}

/// Merges every pair of instances the criterion identifies into a single
/// instance whose id is derived from the sorted source ids.
pub fn identity_merge(
    graph: &UnifiedGraph,
    ctx: &mut PassContext<'_>,
    criterion: &IdentityCriterion,
) -> Result<(UnifiedGraph, Vec<MergeResult>), OntoError> {
    let mut candidates: Vec<(ContentId, ContentId, BTreeMap<String, String>)> = Vec::new();
    for ty in graph
        .active_of_kind(ElementKind::TypeNode)
        .filter(|t| t.payload == criterion.scope)
    {
        for t in graph.triples_with_object(ty.id) {
            if t.predicate == reserved::instance_of() && graph.is_active(&t.subject) {
                candidates.push((t.subject, ty.id, view(graph, t.subject, ty.id)));
            }
        }
    }
    candidates.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    let n = candidates.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if candidates[i].0 != candidates[j].0 && matches(criterion, &candidates[i].2, &candidates[j].2) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<ContentId>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().insert(candidates[i].0);
    }

    let mut next = graph.clone();
    let mut results = Vec::new();
    let mut map = BTreeMap::new();
    for members in groups.values().filter(|g| g.len() >= 2) {
        if members.len() > 2 {
            return Err(OntoError::OverloadedMatch {
                items: members.iter().copied().collect(),
            });
        }
        let sources: Vec<ContentId> = members.iter().copied().collect();
        check_conflicts(graph, sources[0], sources[1])?;
        let merged = next.add_element(ElementKind::InstanceNode, sources.clone(), "", &ctx.transform)?;
        next.reactivate(merged);
        for s in &sources {
            map.insert(*s, merged);
        }
        ctx.trace(sources.clone(), vec![merged], EdgeKind::Merged)?;
        results.push(MergeResult { merged, sources });
    }
    supersede_into(&mut next, &map)?;
    Ok((next, results))
}

fn check_conflicts(graph: &UnifiedGraph, a: ContentId, b: ContentId) -> Result<(), OntoError> {
    let attributes = |x: ContentId| -> BTreeMap<ContentId, ContentId> {
        graph
            .triples_with_subject(x)
            .filter(|t| {
                graph.element(&t.predicate).is_some_and(|p| {
                    p.parents.len() == 1
                        && graph
                            .element(&p.parents[0])
                            .is_some_and(|ty| ty.kind == ElementKind::TypeNode)
                })
            })
            .map(|t| (t.predicate, t.object))
            .collect()
    };
    let (va, vb) = (attributes(a), attributes(b));
    for (attr, value) in &va {
        if vb.get(attr).is_some_and(|other| other != value) {
            return Err(OntoError::ConflictingAttributes {
                a,
                b,
                attribute: *attr,
            });
        }
    }
    Ok(())
}
