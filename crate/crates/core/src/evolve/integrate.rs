use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EvolveError;
use crate::graph::rewrite::rewrite_payloads;
use crate::graph::{ContentId, ElementKind, UnifiedGraph};
use crate::pass::PassContext;
use crate::provenance::EdgeKind;
use crate::verify::{Filter, VerifierContext};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rename {
    pub source_system: String,
    pub from: String,
    pub to: String,
}

/// Value recoding for one column, addressed as `SYSTEM.Table.column`
/// using the names in force after renames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recoding {
    pub column: String,
    pub map: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationMapping {
    #[serde(default)]
    pub renames: Vec<Rename>,
    #[serde(default)]
    pub recodings: Vec<Recoding>,
}

impl IntegrationMapping {
    pub fn from_json(text: &str) -> Result<Self, EvolveError> {
        serde_json::from_str(text).map_err(|e| EvolveError::BadMapping(e.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationReport {
    /// Old id → new id for every element a rename touched.
    pub renamed: BTreeMap<ContentId, ContentId>,
    /// Old cell id → new cell id for recoded values.
    pub recoded_cells: BTreeMap<ContentId, ContentId>,
    /// Recoded column → value map actually applied.
    pub recoded_columns: BTreeMap<ContentId, BTreeMap<String, String>>,
}

fn dataset<'g>(graph: &'g UnifiedGraph, system: &str) -> Option<ContentId> {
    graph
        .active_of_kind(ElementKind::Dataset)
        .find(|d| d.payload == system)
        .map(|d| d.id)
}

fn active_children<'g>(
    graph: &'g UnifiedGraph,
    parent: ContentId,
    kind: ElementKind,
) -> impl Iterator<Item = &'g crate::graph::Element> + 'g {
    graph
        .children(&parent)
        .filter(move |c| c.kind == kind && graph.is_active(&c.id))
}

fn find_column(graph: &UnifiedGraph, path: &str) -> Option<ContentId> {
    let mut parts = path.splitn(3, '.');
    let (system, table, column) = (parts.next()?, parts.next()?, parts.next()?);
    let ds = dataset(graph, system)?;
    let t = active_children(graph, ds, ElementKind::Table).find(|t| t.payload == table)?;
    let c = active_children(graph, t.id, ElementKind::Column).find(|c| c.payload == column)?;
    Some(c.id)
}

pub fn integrate_sources(
    graph: &UnifiedGraph,
    ctx: &mut PassContext<'_>,
    mapping: &IntegrationMapping,
) -> Result<(UnifiedGraph, IntegrationReport), EvolveError> {
    let mut next = graph.clone();
    let mut report = IntegrationReport::default();

    let mut overrides = BTreeMap::new();
    for r in &mapping.renames {
        let ds = dataset(&next, &r.source_system)
            .ok_or_else(|| EvolveError::DanglingReference(r.source_system.clone()))?;
        let mut hit = false;
        for t in active_children(&next, ds, ElementKind::Table) {
            if t.payload == r.from {
                overrides.insert(t.id, r.to.clone());
                hit = true;
            }
            for c in active_children(&next, t.id, ElementKind::Column) {
                if c.payload == r.from {
                    overrides.insert(c.id, r.to.clone());
                    hit = true;
                }
            }
        }
        if !hit {
            return Err(EvolveError::DanglingReference(format!(
                "{}.{}",
                r.source_system, r.from
            )));
        }
    }
    if !overrides.is_empty() {
        let map = rewrite_payloads(&mut next, &overrides, &ctx.transform)?;
        for (old, new) in &map {
            ctx.trace_step("rename", vec![*old], vec![*new], EdgeKind::Renamed)?;
        }
        report.renamed = map;
    }

    for rc in &mapping.recodings {
        let column =
            find_column(&next, &rc.column).ok_or_else(|| EvolveError::DanglingReference(rc.column.clone()))?;
        let cells: Vec<(ContentId, String)> = active_children(&next, column, ElementKind::Cell)
            .map(|c| (c.id, c.payload.clone()))
            .collect();
        let present: BTreeSet<&str> = cells.iter().map(|(_, v)| v.as_str()).collect();
        let image = |v: &str| rc.map.get(v).cloned().unwrap_or_else(|| v.to_string());
        let mut preimages: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for v in rc.map.keys().map(String::as_str).chain(present.iter().copied()) {
            preimages.entry(image(v)).or_default().insert(v.to_string());
        }
        if let Some(clash) = preimages.values().find(|s| s.len() > 1) {
            return Err(EvolveError::NonBijectiveRecoding {
                column: rc.column.clone(),
                values: clash.iter().cloned().collect(),
            });
        }
        let overrides: BTreeMap<ContentId, String> = cells
            .iter()
            .filter(|(_, v)| rc.map.contains_key(v))
            .map(|(id, v)| (*id, image(v)))
            .collect();
        let map = rewrite_payloads(&mut next, &overrides, &ctx.transform)?;
        for (old, new) in &map {
            ctx.trace_step("recode", vec![*old], vec![*new], EdgeKind::Cleaned)?;
        }
        report.recoded_cells.extend(map);
        report.recoded_columns.insert(column, rc.map.clone());
    }
    Ok((next, report))
}

/// Rewrites filter values of registered queries on recoded columns so the
/// queries select the same records after recoding.
pub fn rewrite_recoded_queries(
    verifier: &mut VerifierContext,
    ctx: &mut PassContext<'_>,
    report: &IntegrationReport,
) -> Result<usize, EvolveError> {
    let mut rewritten = 0;
    let ids: Vec<ContentId> = verifier.queries.keys().copied().collect();
    for id in ids {
        let mut query = verifier.queries[&id].current.clone();
        let mut changed = false;
        for f in &mut query.filters {
            if let Filter::Attribute { column, value } = f {
                let resolved = ctx.store.resolve_alias(*column)?;
                if let Some(new) = report.recoded_columns.get(&resolved).and_then(|m| m.get(value)) {
                    *value = new.clone();
                    changed = true;
                }
            }
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
    use crate::collect::Snapshot;
    use crate::graph::content_id;
    use crate::load::{column_id, load_table, table_id, ColumnType, TableFormat, TableSpec};
    use crate::provenance::{ProvenanceStore, RunId};
    use crate::verify::{run_query, ReportQuery};

    fn loaded(store: &mut ProvenanceStore) -> UnifiedGraph {
        let mut g = UnifiedGraph::new();
        let csv = "acct_no,amount,dc\n1,1.00,D\n2,1.00,C\n";
        let spec = TableSpec {
            name: "postings".into(),
            format: TableFormat::Csv,
            delimiter: None,
            has_header: true,
            columns: BTreeMap::from([("amount".into(), ColumnType::Decimal)]),
        };
        let snap = Snapshot::compute(csv.as_bytes(), "m", 64).unwrap();
        let mut ctx = PassContext::new(store, RunId(content_id(b"r")), "load");
        load_table(&mut g, &mut ctx, &snap, csv.as_bytes(), &spec, "AAS").unwrap();
        g
    }

    fn mapping(json: &str) -> IntegrationMapping {
        IntegrationMapping::from_json(json).unwrap()
    }

    #[test]
    fn renames_and_recodes_with_query_rewrite() {
        let mut store = ProvenanceStore::new();
        let g = loaded(&mut store);
        let mut verifier = VerifierContext::new();
        let q = ReportQuery {
            aggregate: column_id("AAS", "postings", "amount"),
            filters: vec![Filter::Attribute {
                column: column_id("AAS", "postings", "dc"),
                value: "D".into(),
            }],
            group_by: Some(column_id("AAS", "postings", "acct_no")),
            target: table_id("AAS", "postings"),
        };
        let qid = verifier.register_report(&g, &store, "ledger", q).unwrap();
        let before = verifier.snapshot_report(&g, &store, qid, "load").unwrap();

        let m = mapping(
            r#"{"renames":[{"source_system":"AAS","from":"acct_no","to":"account_number"},
                           {"source_system":"AAS","from":"dc","to":"dr_cr"},
                           {"source_system":"AAS","from":"postings","to":"Posting"}],
                "recodings":[{"column":"AAS.Posting.dr_cr","map":{"D":"debit","C":"credit"}}]}"#,
        );
        let mut ctx = PassContext::new(&mut store, RunId(content_id(b"r")), "integrate");
        let (g2, report) = integrate_sources(&g, &mut ctx, &m).unwrap();
        assert_eq!(rewrite_recoded_queries(&mut verifier, &mut ctx, &report).unwrap(), 1);
        assert_eq!(report.recoded_cells.len(), 2);

        let new_col = column_id("AAS", "Posting", "account_number");
        assert!(g2.is_active(&new_col));
        assert_eq!(store.resolve_alias(column_id("AAS", "postings", "acct_no")).unwrap(), new_col);
        let cur = &verifier.queries[&qid].current;
        assert!(matches!(&cur.filters[0], Filter::Attribute { value, .. } if value == "debit"));
        let after = run_query(&g2, &store, cur).unwrap();
        assert_eq!(after, before.figures);
    }

    #[test]
    fn many_to_one_recoding_is_rejected() {
        let mut store = ProvenanceStore::new();
        let g = loaded(&mut store);
        let m = mapping(r#"{"recodings":[{"column":"AAS.postings.dc","map":{"D":"x","C":"x"}}]}"#);
        let mut ctx = PassContext::new(&mut store, RunId(content_id(b"r")), "integrate");
        assert!(matches!(
            integrate_sources(&g, &mut ctx, &m),
            Err(EvolveError::NonBijectiveRecoding { .. })
        ));
        // Mapping onto a value already present in the column also collides.
        let m = mapping(r#"{"recodings":[{"column":"AAS.postings.dc","map":{"D":"C"}}]}"#);
        assert!(matches!(
            integrate_sources(&g, &mut ctx, &m),
            Err(EvolveError::NonBijectiveRecoding { .. })
        ));
    }

    #[test]
    fn unknown_names_are_dangling() {
        let mut store = ProvenanceStore::new();
        let g = loaded(&mut store);
        let mut ctx = PassContext::new(&mut store, RunId(content_id(b"r")), "integrate");
        for json in [
            r#"{"renames":[{"source_system":"AAS","from":"nope","to":"x"}]}"#,
            r#"{"renames":[{"source_system":"QQQ","from":"dc","to":"x"}]}"#,
            r#"{"recodings":[{"column":"AAS.postings.nope","map":{}}]}"#,
        ] {
            assert!(matches!(
                integrate_sources(&g, &mut ctx, &mapping(json)),
                Err(EvolveError::DanglingReference(_))
            ));
        }
    }
}
