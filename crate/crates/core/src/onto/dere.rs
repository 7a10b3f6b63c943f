use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::merge::is_merged;
use super::OntoError;
use crate::graph::{reserved, ContentId, ElementKind, UnifiedGraph};
use crate::pass::PassContext;
use crate::provenance::EdgeKind;
use crate::verify::{Filter, VerifierContext, COMPANY, COUNTERPARTY, CREDIT, DEBIT, DR_CR};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DereType {
    pub dr_cr: ContentId,
    pub company: ContentId,
    /// The company value when every instance belongs to one company.
    pub sole_company: Option<ContentId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DereReport {
    pub types: BTreeMap<ContentId, DereType>,
    pub relational_triples: usize,
    pub removed_marks: usize,
}

fn attr_by_label(graph: &UnifiedGraph, ty: ContentId, label: &str) -> Option<ContentId> {
    graph
        .children(&ty)
        .find(|c| c.kind == ElementKind::RelationType && c.payload == label && graph.is_active(&c.id))
        .map(|c| c.id)
}

fn instances(graph: &UnifiedGraph, ty: ContentId) -> Vec<ContentId> {
    let mut v: Vec<ContentId> = graph
        .triples_with_object(ty)
        .filter(|t| t.predicate == reserved::instance_of() && graph.is_active(&t.subject))
        .map(|t| t.subject)
        .collect();
    v.sort();
    v.dedup();
    v
}

fn object_of(graph: &UnifiedGraph, subject: ContentId, predicate: ContentId) -> Option<ContentId> {
    graph
        .triples_with_subject(subject)
        .find(|t| t.predicate == predicate)
        .map(|t| t.object)
}

/// Replaces the perspective-dependent debit/credit mark with debit and
/// credit relations to companies, in every type holding a merged item.
pub fn dere_transform(
    graph: &UnifiedGraph,
    ctx: &mut PassContext<'_>,
) -> Result<(UnifiedGraph, DereReport), OntoError> {
    let types: Vec<ContentId> = graph
        .active_of_kind(ElementKind::TypeNode)
        .map(|t| t.id)
        .collect();
    for &ty in &types {
        let Some(cp) = attr_by_label(graph, ty, COUNTERPARTY) else {
            continue;
        };
        for item in instances(graph, ty) {
            let has_cp = object_of(graph, item, cp)
                .and_then(|v| graph.element(&v))
                .is_some_and(|v| !v.payload.is_empty());
            if has_cp && !is_merged(graph, &item) {
                return Err(OntoError::MissingMerge { item });
            }
        }
    }

    let mut next = graph.clone();
    let mut report = DereReport::default();
    let affected: Vec<ContentId> = types
        .into_iter()
        .filter(|ty| instances(graph, *ty).iter().any(|i| is_merged(graph, i)))
        .collect();
    let (debit_rel, credit_rel) = (reserved::debit_rel(), reserved::credit_rel());
    for rel in [reserved::DEBIT_REL, reserved::CREDIT_REL] {
        if !next.contains(&reserved::relation_id(rel)) {
            next.add_element(ElementKind::RelationType, vec![], rel, &ctx.transform)?;
            ctx.trace_step("reserve", vec![], vec![reserved::relation_id(rel)], EdgeKind::Seeded)?;
        }
    }

    for ty in affected {
        let missing = |label: &str| OntoError::MissingAttribute {
            type_id: ty,
            label: label.to_string(),
        };
        let dr_cr = attr_by_label(graph, ty, DR_CR).ok_or_else(|| missing(DR_CR))?;
        let company = attr_by_label(graph, ty, COMPANY).ok_or_else(|| missing(COMPANY))?;
        let mut companies = BTreeSet::new();
        for item in instances(graph, ty) {
            let who = object_of(graph, item, company).ok_or_else(|| missing(COMPANY))?;
            companies.insert(who);
            let Some(mark) = graph
                .triples_with_subject(item)
                .find(|t| t.predicate == dr_cr)
                .cloned()
            else {
                continue;
            };
            let value = graph.element(&mark.object).map(|v| v.payload.as_str()).unwrap_or("");
            let rel = match value {
                DEBIT => debit_rel,
                CREDIT => credit_rel,
                other => {
                    return Err(OntoError::UnknownMark {
                        item,
                        value: other.to_string(),
                    })
                }
            };
            next.remove_triple(mark.id);
            let t = next.add_triple(rel, item, who)?;
            ctx.trace_step("mark", vec![mark.id], vec![t], EdgeKind::Renamed)?;
            report.removed_marks += 1;
            report.relational_triples += 1;
        }
        if next.triples_with_predicate(dr_cr).next().is_none() {
            next.supersede(dr_cr);
            ctx.trace_step("schema", vec![dr_cr], vec![debit_rel, credit_rel], EdgeKind::Derived)?;
        }
        report.types.insert(
            ty,
            DereType {
                dr_cr,
                company,
                sole_company: (companies.len() == 1).then(|| *companies.first().expect("one")),
            },
        );
    }
    Ok((next, report))
}

/// Rewrites `dr_cr = debit|credit` filters on transformed types into the
/// matching relation to the type's company.
pub fn rewrite_dere_queries(
    verifier: &mut VerifierContext,
    ctx: &mut PassContext<'_>,
    report: &DereReport,
) -> Result<usize, OntoError> {
    let mut rewritten = 0;
    let ids: Vec<ContentId> = verifier.queries.keys().copied().collect();
    for id in ids {
        let mut query = verifier.queries[&id].current.clone();
        let target = ctx.store.resolve_alias(query.target)?;
        let Some(info) = report.types.get(&target) else {
            continue;
        };
        let mut changed = false;
        for f in &mut query.filters {
            let Filter::Attribute { column, value } = f else {
                continue;
            };
            if ctx.store.resolve_alias(*column)? != info.dr_cr {
                continue;
            }
            let relation = match value.as_str() {
                DEBIT => reserved::debit_rel(),
                CREDIT => reserved::credit_rel(),
                other => {
                    return Err(OntoError::UnknownMark {
                        item: *column,
                        value: other.to_string(),
                    })
                }
            };
            let object = info.sole_company.ok_or(OntoError::AmbiguousCompany(target))?;
            *f = Filter::Relation { object, relation };
            changed = true;
        }
        if changed {
            verifier.rewrite(ctx, id, query)?;
            rewritten += 1;
        }
    }
    Ok(rewritten)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::content_id;
    use crate::onto::merge::{identity_merge, IdentityCriterion};
    use crate::provenance::{ProvenanceStore, RunId};
    use crate::verify::{trial_balance, Balance};

    const ATTRS: [&str; 5] = ["amount", "date", "dr_cr", "company", "counterparty"];

    fn ledger(g: &mut UnifiedGraph, system: &str, rows: &[[&str; 5]]) {
        let inst_of = g
            .add_element(ElementKind::RelationType, vec![], reserved::INSTANCE_OF, "x")
            .unwrap();
        let ds = g.add_element(ElementKind::Dataset, vec![], system, "x").unwrap();
        let ty = g.add_element(ElementKind::TypeNode, vec![ds], "Posting", "x").unwrap();
        let attrs: Vec<_> = ATTRS
            .iter()
            .map(|a| g.add_element(ElementKind::RelationType, vec![ty], *a, "x").unwrap())
            .collect();
        let dt = g
            .add_element(ElementKind::RelationType, vec![], reserved::DATATYPE, "x")
            .unwrap();
        let dec = g.add_element(ElementKind::Value, vec![], "decimal", "x").unwrap();
        g.add_triple(dt, attrs[0], dec).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let inst = g.add_element(ElementKind::InstanceNode, vec![ty], i.to_string(), "x").unwrap();
            g.add_triple(inst_of, inst, ty).unwrap();
            for (v, a) in row.iter().zip(&attrs) {
                let val = g.add_element(ElementKind::Value, vec![], *v, "x").unwrap();
                g.add_triple(*a, inst, val).unwrap();
            }
        }
    }

    fn pair_graph() -> UnifiedGraph {
        let mut g = UnifiedGraph::new();
        ledger(&mut g, "AAS", &[
            ["100.00", "2024-03-01", "debit", "Acme", "Zenith"],
            ["100.00", "2024-03-01", "credit", "Acme", ""],
        ]);
        ledger(&mut g, "ZAS", &[
            ["100.00", "2024-03-01", "credit", "Zenith", "Acme"],
            ["100.00", "2024-03-01", "debit", "Zenith", ""],
        ]);
        g
    }

    fn criterion() -> IdentityCriterion {
        IdentityCriterion::from_json(
            r#"{"scope":"Posting","equal_attributes":["amount","date"],"mirror":{"counterparty_swap":true,"drcr_opposed":true}}"#,
        )
        .unwrap()
    }

    #[test]
    fn merged_transaction_debits_acme_and_credits_zenith() {
        let g = pair_graph();
        let before = trial_balance(&g, None).unwrap();
        let mut store = ProvenanceStore::new();
        let mut ctx = PassContext::new(&mut store, RunId(content_id(b"r")), "onto");
        let (m, results) = identity_merge(&g, &mut ctx, &criterion()).unwrap();
        let (d, report) = dere_transform(&m, &mut ctx).unwrap();
        let merged = results[0].merged;
        let acme = crate::graph::element_id(ElementKind::Value, &[], "Acme");
        let zenith = crate::graph::element_id(ElementKind::Value, &[], "Zenith");
        let debits: Vec<_> = d.triples_with_subject(merged).filter(|t| t.predicate == reserved::debit_rel()).collect();
        let credits: Vec<_> = d.triples_with_subject(merged).filter(|t| t.predicate == reserved::credit_rel()).collect();
        assert_eq!(debits.len(), 1);
        assert_eq!(credits.len(), 1);
        assert_eq!(debits[0].object, acme);
        assert_eq!(credits[0].object, zenith);
        assert_eq!(report.types.len(), 2);
        for info in report.types.values() {
            assert!(d.is_superseded(&info.dr_cr));
        }
        let after = trial_balance(&d, None).unwrap();
        assert_eq!(before, after);
        assert_eq!(after["Acme"], Balance { debit: 10000, credit: 10000 });
    }

    #[test]
    fn no_intercompany_items_is_identity() {
        let mut g = UnifiedGraph::new();
        ledger(&mut g, "PHAS", &[["5.00", "d", "debit", "Peak", ""], ["5.00", "d", "credit", "Peak", ""]]);
        let mut store = ProvenanceStore::new();
        let mut ctx = PassContext::new(&mut store, RunId(content_id(b"r")), "dere");
        let (d, report) = dere_transform(&g, &mut ctx).unwrap();
        assert_eq!(d.triples().collect::<Vec<_>>(), g.triples().collect::<Vec<_>>());
        assert_eq!(report.relational_triples, 0);
    }

    #[test]
    fn unmerged_intercompany_item_is_missing_its_merge() {
        let g = pair_graph();
        let mut store = ProvenanceStore::new();
        let mut ctx = PassContext::new(&mut store, RunId(content_id(b"r")), "dere");
        assert!(matches!(dere_transform(&g, &mut ctx), Err(OntoError::MissingMerge { .. })));
    }
}
