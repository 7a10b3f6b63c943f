//! Report queries, hashed figures and the trial-balance check.
//!
//! A query reads either a loaded table (rows and cells) or a unified type
//! (instances and attribute triples). Every id in a query is resolved through
//! alias edges first, so a query registered against raw columns keeps working
//! after renames and unification.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::amount::parse_minor_units;
use crate::graph::{content_id, element_id, reserved, ContentId, ElementKind, UnifiedGraph};
use crate::pass::PassContext;
use crate::provenance::{EdgeKind, ProvenanceError, ProvenanceStore};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerifyError {
    #[error("query references {0}, which does not resolve to an active element of the right kind")]
    DanglingReference(ContentId),
    #[error("aggregate column {0} is not typed decimal")]
    NonDecimalAggregate(ContentId),
    #[error("item {item} has amount {text:?}, which is not a decimal")]
    BadAmount { item: ContentId, text: String },
    #[error("amount overflow while summing")]
    Overflow,
    #[error("signatures belong to different queries ({before} vs {after})")]
    QueryMismatch { before: ContentId, after: ContentId },
    #[error("item {item} carries neither a debit/credit mark nor a debit/credit relation")]
    UnknownRepresentation { item: ContentId },
    #[error("query {0} is not registered")]
    UnknownQuery(ContentId),
    #[error("query file: {0}")]
    BadQuery(String),
    #[error(transparent)]
    Alias(#[from] ProvenanceError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Filter {
    Attribute { column: ContentId, value: String },
    Relation { object: ContentId, relation: ContentId },
}

/// Filter, group, sum. Fields are declared in alphabetical order so the
/// serialized form is canonical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportQuery {
    pub aggregate: ContentId,
    #[serde(default)]
    pub filters: Vec<Filter>,
    #[serde(default)]
    pub group_by: Option<ContentId>,
    pub target: ContentId,
}

impl ReportQuery {
    pub fn from_json(text: &str) -> Result<Self, VerifyError> {
        serde_json::from_str(text).map_err(|e| VerifyError::BadQuery(e.to_string()))
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("query serializes")
    }

    pub fn id(&self) -> ContentId {
        content_id(self.canonical_json().as_bytes())
    }
}

/// Sorted `(group key, minor units)` pairs with unique keys.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Figures(pub Vec<(String, i64)>);

impl Figures {
    pub fn from_sums(sums: BTreeMap<String, i64>) -> Self {
        Figures(sums.into_iter().collect())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<i64> {
        self.0
            .binary_search_by(|(k, _)| k.as_str().cmp(key))
            .ok()
            .map(|i| self.0[i].1)
    }

    /// `<key>,<amount>\n` per group; the empty list is the empty string.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (key, amount) in &self.0 {
            out.push_str(&escape_key(key));
            out.push(',');
            out.push_str(&amount.to_string());
            out.push('\n');
        }
        out
    }

    pub fn hash(&self) -> ContentId {
        content_id(self.canonical_text().as_bytes())
    }
}

fn escape_key(key: &str) -> String {
    key.replace('\\', "\\\\").replace('\n', "\\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSignature {
    pub query: ContentId,
    pub stage: String,
    pub hash: ContentId,
    pub figures: Figures,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffLine {
    pub key: String,
    pub before: Option<i64>,
    pub after: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "diff", rename_all = "lowercase")]
pub enum Comparison {
    Match,
    Mismatch(Vec<DiffLine>),
}

impl Comparison {
    pub fn is_match(&self) -> bool {
        matches!(self, Comparison::Match)
    }
}

pub fn compare_signatures(
    before: &ReportSignature,
    after: &ReportSignature,
) -> Result<Comparison, VerifyError> {
    if before.query != after.query {
        return Err(VerifyError::QueryMismatch {
            before: before.query,
            after: after.query,
        });
    }
    if before.hash == after.hash {
        return Ok(Comparison::Match);
    }
    let keys: BTreeSet<&str> = before
        .figures
        .0
        .iter()
        .chain(&after.figures.0)
        .map(|(k, _)| k.as_str())
        .collect();
    let diff = keys
        .into_iter()
        .filter_map(|k| {
            let (b, a) = (before.figures.get(k), after.figures.get(k));
            (b != a).then(|| DiffLine {
                key: k.to_string(),
                before: b,
                after: a,
            })
        })
        .collect();
    Ok(Comparison::Mismatch(diff))
}

/// The rows of a table or the instances of a type, with attribute lookup.
pub(crate) struct Records<'g> {
    graph: &'g UnifiedGraph,
    pub container: ContentId,
    pub is_table: bool,
    pub items: Vec<ContentId>,
}

impl<'g> Records<'g> {
    pub fn of(graph: &'g UnifiedGraph, container: ContentId) -> Option<Self> {
        let e = graph.element(&container)?;
        if !graph.is_active(&container) {
            return None;
        }
        let (is_table, mut items): (bool, Vec<ContentId>) = match e.kind {
            ElementKind::Table => (
                true,
                graph
                    .children(&container)
                    .filter(|c| c.kind == ElementKind::Row && graph.is_active(&c.id))
                    .map(|c| c.id)
                    .collect(),
            ),
            ElementKind::TypeNode => (
                false,
                graph
                    .triples_with_object(container)
                    .filter(|t| t.predicate == reserved::instance_of() && graph.is_active(&t.subject))
                    .map(|t| t.subject)
                    .collect(),
            ),
            _ => return None,
        };
        items.sort();
        items.dedup();
        Some(Records {
            graph,
            container,
            is_table,
            items,
        })
    }

    /// Active columns or attributes of the container, by label.
    pub fn attributes(&self) -> BTreeMap<String, ContentId> {
        let kind = if self.is_table {
            ElementKind::Column
        } else {
            ElementKind::RelationType
        };
        self.graph
            .children(&self.container)
            .filter(|c| c.kind == kind && self.graph.is_active(&c.id))
            .map(|c| (c.payload.clone(), c.id))
            .collect()
    }

    pub fn owns_attribute(&self, attr: ContentId) -> bool {
        self.graph.element(&attr).is_some_and(|e| {
            e.parents == [self.container]
                && self.graph.is_active(&attr)
                && e.kind
                    == if self.is_table {
                        ElementKind::Column
                    } else {
                        ElementKind::RelationType
                    }
        })
    }

    pub fn value(&self, item: ContentId, attr: ContentId) -> Option<&'g str> {
        if self.is_table {
            self.graph
                .children(&item)
                .find(|c| {
                    c.kind == ElementKind::Cell
                        && c.parents.get(1) == Some(&attr)
                        && self.graph.is_active(&c.id)
                })
                .map(|c| c.payload.as_str())
        } else {
            self.graph
                .triples_with_subject(item)
                .find(|t| t.predicate == attr)
                .and_then(|t| self.graph.element(&t.object))
                .map(|e| e.payload.as_str())
        }
    }
}

fn decimal_marker() -> ContentId {
    element_id(ElementKind::Value, &[], "decimal")
}

pub fn is_decimal(graph: &UnifiedGraph, column: ContentId) -> bool {
    graph.has_triple(reserved::datatype(), column, decimal_marker())
}

struct ResolvedQuery {
    target: ContentId,
    filters: Vec<Filter>,
    group_by: Option<ContentId>,
    aggregate: ContentId,
}

fn resolve_query(
    graph: &UnifiedGraph,
    store: &ProvenanceStore,
    query: &ReportQuery,
) -> Result<ResolvedQuery, VerifyError> {
    let target = store.resolve_alias(query.target)?;
    let records = Records::of(graph, target).ok_or(VerifyError::DanglingReference(query.target))?;
    let attr = |id: ContentId| -> Result<ContentId, VerifyError> {
        let r = store.resolve_alias(id)?;
        if records.owns_attribute(r) {
            Ok(r)
        } else {
            Err(VerifyError::DanglingReference(id))
        }
    };
    let mut filters = Vec::with_capacity(query.filters.len());
    for f in &query.filters {
        filters.push(match f {
            Filter::Attribute { column, value } => Filter::Attribute {
                column: attr(*column)?,
                value: value.clone(),
            },
            Filter::Relation { relation, object } => {
                let is_rel = graph
                    .element(relation)
                    .is_some_and(|e| e.kind == ElementKind::RelationType);
                if !is_rel {
                    return Err(VerifyError::DanglingReference(*relation));
                }
                if !graph.contains(object) {
                    return Err(VerifyError::DanglingReference(*object));
                }
                f.clone()
            }
        });
    }
    let group_by = query.group_by.map(attr).transpose()?;
    let aggregate = attr(query.aggregate)?;
    Ok(ResolvedQuery {
        target,
        filters,
        group_by,
        aggregate,
    })
}

/// Checks that every reference in `query` resolves.
pub fn validate_query(
    graph: &UnifiedGraph,
    store: &ProvenanceStore,
    query: &ReportQuery,
) -> Result<(), VerifyError> {
    resolve_query(graph, store, query).map(|_| ())
}

pub fn run_query(
    graph: &UnifiedGraph,
    store: &ProvenanceStore,
    query: &ReportQuery,
) -> Result<Figures, VerifyError> {
    let q = resolve_query(graph, store, query)?;
    if !is_decimal(graph, q.aggregate) {
        return Err(VerifyError::NonDecimalAggregate(query.aggregate));
    }
    let records = Records::of(graph, q.target).expect("resolved above");
    let mut sums: BTreeMap<String, i64> = BTreeMap::new();
    for &item in &records.items {
        let keep = q.filters.iter().all(|f| match f {
            Filter::Attribute { column, value } => records.value(item, *column) == Some(value.as_str()),
            Filter::Relation { relation, object } => graph.has_triple(*relation, item, *object),
        });
        if !keep {
            continue;
        }
        let key = q
            .group_by
            .map(|g| records.value(item, g).unwrap_or("").to_string())
            .unwrap_or_default();
        let text = records.value(item, q.aggregate).unwrap_or("");
        let amount = parse_minor_units(text).map_err(|_| VerifyError::BadAmount {
            item,
            text: text.to_string(),
        })?;
        let slot = sums.entry(key).or_insert(0);
        *slot = slot.checked_add(amount).ok_or(VerifyError::Overflow)?;
    }
    Ok(Figures::from_sums(sums))
}

pub fn signature(
    graph: &UnifiedGraph,
    store: &ProvenanceStore,
    query_id: ContentId,
    query: &ReportQuery,
    stage: &str,
) -> Result<ReportSignature, VerifyError> {
    let figures = run_query(graph, store, query)?;
    Ok(ReportSignature {
        query: query_id,
        stage: stage.to_string(),
        hash: figures.hash(),
        figures,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisteredQuery {
    pub name: String,
    pub original: ReportQuery,
    pub current: ReportQuery,
}

/// Registered queries, their rewritten forms and the signatures taken so far.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierContext {
    pub queries: BTreeMap<ContentId, RegisteredQuery>,
    pub signatures: Vec<ReportSignature>,
    pub baseline: Option<String>,
}

impl VerifierContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_report(
        &mut self,
        graph: &UnifiedGraph,
        store: &ProvenanceStore,
        name: &str,
        query: ReportQuery,
    ) -> Result<ContentId, VerifyError> {
        validate_query(graph, store, &query)?;
        let id = query.id();
        self.queries.entry(id).or_insert_with(|| RegisteredQuery {
            name: name.to_string(),
            original: query.clone(),
            current: query,
        });
        Ok(id)
    }

    pub fn snapshot_report(
        &mut self,
        graph: &UnifiedGraph,
        store: &ProvenanceStore,
        id: ContentId,
        stage: &str,
    ) -> Result<ReportSignature, VerifyError> {
        let q = self.queries.get(&id).ok_or(VerifyError::UnknownQuery(id))?;
        let sig = signature(graph, store, id, &q.current, stage)?;
        self.baseline.get_or_insert_with(|| stage.to_string());
        self.signatures
            .retain(|s| !(s.query == id && s.stage == stage));
        self.signatures.push(sig.clone());
        Ok(sig)
    }

    pub fn snapshot_all(
        &mut self,
        graph: &UnifiedGraph,
        store: &ProvenanceStore,
        stage: &str,
    ) -> Result<Vec<ReportSignature>, VerifyError> {
        let ids: Vec<ContentId> = self.queries.keys().copied().collect();
        ids.into_iter()
            .map(|id| self.snapshot_report(graph, store, id, stage))
            .collect()
    }

    pub fn signature_at(&self, id: ContentId, stage: &str) -> Option<&ReportSignature> {
        self.signatures
            .iter()
            .find(|s| s.query == id && s.stage == stage)
    }

    /// Runs every query now and compares with the baseline stage.
    pub fn check(
        &self,
        graph: &UnifiedGraph,
        store: &ProvenanceStore,
        stage: &str,
    ) -> Result<Vec<(ContentId, Comparison)>, VerifyError> {
        let baseline = self.baseline.as_deref().unwrap_or(stage);
        let mut out = Vec::new();
        for (id, q) in &self.queries {
            let now = signature(graph, store, *id, &q.current, stage)?;
            let Some(before) = self.signature_at(*id, baseline) else {
                continue;
            };
            out.push((*id, compare_signatures(before, &now)?));
        }
        Ok(out)
    }

    /// Replaces the current form of a query, linking old and new query ids.
    pub fn rewrite(
        &mut self,
        ctx: &mut PassContext<'_>,
        id: ContentId,
        new: ReportQuery,
    ) -> Result<(), VerifyError> {
        let q = self.queries.get_mut(&id).ok_or(VerifyError::UnknownQuery(id))?;
        let (old_id, new_id) = (q.current.id(), new.id());
        if old_id != new_id {
            ctx.trace_step("query", vec![old_id], vec![new_id], EdgeKind::Renamed)?;
            q.current = new;
        }
        Ok(())
    }
}

pub const COMPANY: &str = "company";
pub const AMOUNT: &str = "amount";
pub const DR_CR: &str = "dr_cr";
pub const COUNTERPARTY: &str = "counterparty";
pub const DEBIT: &str = "debit";
pub const CREDIT: &str = "credit";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Balance {
    pub debit: i64,
    pub credit: i64,
}

impl Balance {
    pub fn balanced(&self) -> bool {
        self.debit == self.credit
    }
}

/// Debit and credit totals per company over every ledger-shaped container.
///
/// A container counts as a ledger when it has `company` and `amount`
/// attributes and either a `dr_cr` attribute or instances carrying debit or
/// credit relations.
pub fn trial_balance(
    graph: &UnifiedGraph,
    company_scope: Option<&str>,
) -> Result<BTreeMap<String, Balance>, VerifyError> {
    let debit_rel = reserved::debit_rel();
    let credit_rel = reserved::credit_rel();
    let mut totals: BTreeMap<String, Balance> = BTreeMap::new();
    let mut add = |company: &str, debit: bool, amount: i64| -> Result<(), VerifyError> {
        if company_scope.is_some_and(|c| c != company) {
            return Ok(());
        }
        let b = totals.entry(company.to_string()).or_default();
        let slot = if debit { &mut b.debit } else { &mut b.credit };
        *slot = slot.checked_add(amount).ok_or(VerifyError::Overflow)?;
        Ok(())
    };

    let containers: Vec<ContentId> = graph
        .active_elements()
        .filter(|e| matches!(e.kind, ElementKind::Table | ElementKind::TypeNode))
        .map(|e| e.id)
        .collect();
    // Relational facts are counted once per instance; remember its amount.
    let mut relational_amount: BTreeMap<ContentId, i64> = BTreeMap::new();
    for container in containers {
        let records = Records::of(graph, container).expect("active container");
        let attrs = records.attributes();
        let (Some(&company), Some(&amount)) = (attrs.get(COMPANY), attrs.get(AMOUNT)) else {
            continue;
        };
        let dr_cr = attrs.get(DR_CR).copied();
        let relational = |item: ContentId| {
            !records.is_table
                && graph
                    .triples_with_subject(item)
                    .any(|t| t.predicate == debit_rel || t.predicate == credit_rel)
        };
        if dr_cr.is_none() && !records.items.iter().any(|i| relational(*i)) {
            continue;
        }
        for &item in &records.items {
            let text = records.value(item, amount).unwrap_or("");
            let value = parse_minor_units(text).map_err(|_| VerifyError::BadAmount {
                item,
                text: text.to_string(),
            })?;
            let mark = dr_cr.and_then(|a| records.value(item, a));
            match mark {
                Some(DEBIT) | Some(CREDIT) => {
                    let who = records.value(item, company).unwrap_or("");
                    add(who, mark == Some(DEBIT), value)?;
                }
                Some(_) => return Err(VerifyError::UnknownRepresentation { item }),
                None if relational(item) => {
                    relational_amount.entry(item).or_insert(value);
                }
                None => return Err(VerifyError::UnknownRepresentation { item }),
            }
        }
    }
    for (item, value) in relational_amount {
        for t in graph.triples_with_subject(item) {
            let debit = t.predicate == debit_rel;
            if !(debit || t.predicate == credit_rel) {
                continue;
            }
            let who = graph.element(&t.object).map(|e| e.payload.as_str()).unwrap_or("");
            add(who, debit, value)?;
        }
    }
    Ok(totals)
}
