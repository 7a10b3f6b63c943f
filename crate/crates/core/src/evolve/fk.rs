use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EvolveError;
use crate::graph::{reserved, ContentId, ElementKind, UnifiedGraph};
use crate::pass::{ensure_relation, PassContext};
use crate::provenance::EdgeKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FkParams {
    pub min_inclusion: f64,
    pub require_unique: bool,
}

impl Default for FkParams {
    fn default() -> Self {
        FkParams {
            min_inclusion: 1.0,
            require_unique: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FkCandidate {
    pub referencing: ContentId,
    pub referenced: ContentId,
    /// Distinct referencing values found in the referenced column.
    pub shared: usize,
    /// Distinct non-empty referencing values.
    pub distinct: usize,
    pub referenced_unique: bool,
    pub name_match: bool,
    pub accepted: bool,
}

impl FkCandidate {
    pub fn inclusion(&self) -> f64 {
        self.shared as f64 / self.distinct as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FkReport {
    pub candidates: Vec<FkCandidate>,
}

impl FkReport {
    pub fn accepted(&self) -> impl Iterator<Item = &FkCandidate> {
        self.candidates.iter().filter(|c| c.accepted)
    }
}

struct Profile {
    label: String,
    table_label: String,
    distinct: BTreeSet<String>,
    /// Every row has a non-empty value and no value repeats.
    unique: bool,
}

fn profile(graph: &UnifiedGraph, column: ContentId) -> Profile {
    let col = graph.element(&column).expect("active column");
    let table = col.parents.first().and_then(|t| graph.element(t));
    let rows: Vec<ContentId> = table
        .map(|t| {
            graph
                .children(&t.id)
                .filter(|r| r.kind == ElementKind::Row && graph.is_active(&r.id))
                .map(|r| r.id)
                .collect()
        })
        .unwrap_or_default();
    let values: Vec<&str> = graph
        .children(&column)
        .filter(|c| c.kind == ElementKind::Cell && graph.is_active(&c.id))
        .map(|c| c.payload.as_str())
        .collect();
    let non_empty: Vec<&str> = values.iter().copied().filter(|v| !v.is_empty()).collect();
    let distinct: BTreeSet<String> = non_empty.iter().map(|v| v.to_string()).collect();
    Profile {
        label: col.payload.clone(),
        table_label: table.map(|t| t.payload.clone()).unwrap_or_default(),
        unique: !rows.is_empty() && non_empty.len() == rows.len() && distinct.len() == rows.len(),
        distinct,
    }
}

/// Unary inclusion dependencies between every ordered pair of distinct
/// active columns. Accepted pairs become foreign-key triples.
pub fn infer_foreign_keys(
    graph: &UnifiedGraph,
    ctx: &mut PassContext<'_>,
    params: FkParams,
) -> Result<(UnifiedGraph, FkReport), EvolveError> {
    let columns: BTreeMap<ContentId, Profile> = graph
        .active_of_kind(ElementKind::Column)
        .map(|c| (c.id, profile(graph, c.id)))
        .collect();
    let mut report = FkReport::default();
    for (a, pa) in &columns {
        if pa.distinct.is_empty() {
            continue;
        }
        for (b, pb) in &columns {
            if a == b || (params.require_unique && !pb.unique) {
                continue;
            }
            let shared = pa.distinct.intersection(&pb.distinct).count();
            if shared == 0 {
                continue;
            }
            let distinct = pa.distinct.len();
            let singular = pb.table_label.strip_suffix('s').unwrap_or(&pb.table_label);
            let name_match = pa.label == pb.label
                || [pb.table_label.as_str(), singular]
                    .iter()
                    .any(|t| pa.label.eq_ignore_ascii_case(&format!("{t}_{}", pb.label)));
            let accepted = shared as f64 >= params.min_inclusion * distinct as f64
                && (pb.unique || !params.require_unique);
            report.candidates.push(FkCandidate {
                referencing: *a,
                referenced: *b,
                shared,
                distinct,
                referenced_unique: pb.unique,
                name_match,
                accepted,
            });
        }
    }

    let mut next = graph.clone();
    if report.accepted().next().is_some() {
        let fk = ensure_relation::<EvolveError>(&mut next, ctx, reserved::FOREIGN_KEY)?;
        for c in report.candidates.iter().filter(|c| c.accepted) {
            let t = next.add_triple(fk, c.referencing, c.referenced)?;
            ctx.trace(vec![c.referencing, c.referenced], vec![t], EdgeKind::Derived)?;
        }
    }
    Ok((next, report))
}
