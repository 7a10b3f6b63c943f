//! The unified graph: metadata, schema and data folded into one set of
//! content-addressed elements linked by triples.

mod dot;
mod element;
mod id;
pub mod reserved;
pub(crate) mod rewrite;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub(crate) use dot::escape as dot_escape;
pub use dot::DotFilter;
pub use element::{
    canonical_serialize, canonical_serialize_bytes, element_id, triple_id, Element, ElementKind,
    Generality, Triple,
};
pub use id::{content_id, ContentId, ParseContentIdError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("payload is not valid UTF-8: {0}")]
    Encoding(String),
    #[error("reference to {0} does not resolve within the graph")]
    DanglingReference(ContentId),
    #[error("predicate {0} is not a RelationType element")]
    NotARelation(ContentId),
    #[error("subtypeOf({subject}, {object}) would create a cycle")]
    SubtypeCycle { subject: ContentId, object: ContentId },
    #[error("unknown element kind {0:?}")]
    UnknownKind(String),
    #[error("stored id {stored} does not match recomputed id {computed}")]
    IdentityMismatch { stored: ContentId, computed: ContentId },
}

/// Immutable-by-convention graph value. Passes clone and extend it to build
/// successors; superseded elements stay in place, tagged, so lineage stays
/// complete.
#[derive(Debug, Clone, Default)]
pub struct UnifiedGraph {
    elements: BTreeMap<ContentId, Element>,
    triples: BTreeMap<ContentId, Triple>,
    superseded: BTreeSet<ContentId>,
    children: BTreeMap<ContentId, BTreeSet<ContentId>>,
    by_subject: BTreeMap<ContentId, BTreeSet<ContentId>>,
    by_object: BTreeMap<ContentId, BTreeSet<ContentId>>,
    by_predicate: BTreeMap<ContentId, BTreeSet<ContentId>>,
}

impl PartialEq for UnifiedGraph {
    fn eq(&self, other: &Self) -> bool {
        self.elements.keys().eq(other.elements.keys())
            && self.triples.keys().eq(other.triples.keys())
            && self.superseded == other.superseded
    }
}

impl Eq for UnifiedGraph {}

impl UnifiedGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_element(
        &mut self,
        kind: ElementKind,
        parents: Vec<ContentId>,
        payload: impl Into<String>,
        origin: impl Into<String>,
    ) -> Result<ContentId, GraphError> {
        if let Some(missing) = parents.iter().find(|p| !self.elements.contains_key(p)) {
            return Err(GraphError::DanglingReference(*missing));
        }
        let element = Element::new(kind, parents, payload, origin);
        let id = element.id;
        if self.elements.contains_key(&id) {
            return Ok(id);
        }
        for parent in &element.parents {
            self.children.entry(*parent).or_default().insert(id);
        }
        self.elements.insert(id, element);
        Ok(id)
    }

    pub fn add_triple(
        &mut self,
        predicate: ContentId,
        subject: ContentId,
        object: ContentId,
    ) -> Result<ContentId, GraphError> {
        match self.elements.get(&predicate) {
            None => return Err(GraphError::DanglingReference(predicate)),
            Some(p) if p.kind != ElementKind::RelationType => {
                return Err(GraphError::NotARelation(predicate))
            }
            Some(_) => {}
        }
        for end in [subject, object] {
            if !self.elements.contains_key(&end) {
                return Err(GraphError::DanglingReference(end));
            }
        }
        let triple = Triple::new(predicate, subject, object);
        if self.triples.contains_key(&triple.id) {
            return Ok(triple.id);
        }
        if predicate == reserved::subtype_of()
            && (subject == object || self.subtype_reaches(object, subject))
        {
            return Err(GraphError::SubtypeCycle { subject, object });
        }
        self.index_triple(&triple);
        self.triples.insert(triple.id, triple);
        Ok(triple.id)
    }

    fn index_triple(&mut self, t: &Triple) {
        self.by_subject.entry(t.subject).or_default().insert(t.id);
        self.by_object.entry(t.object).or_default().insert(t.id);
        self.by_predicate.entry(t.predicate).or_default().insert(t.id);
    }

    /// Whether `to` is reachable from `from` along subtypeOf triples.
    fn subtype_reaches(&self, from: ContentId, to: ContentId) -> bool {
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(node) = stack.pop() {
            if node == to {
                return true;
            }
            if !seen.insert(node) {
                continue;
            }
            stack.extend(
                self.triples_with_subject(node)
                    .filter(|t| t.predicate == reserved::subtype_of())
                    .map(|t| t.object),
            );
        }
        false
    }

    pub(crate) fn remove_triple(&mut self, id: ContentId) -> Option<Triple> {
        let t = self.triples.remove(&id)?;
        for (index, key) in [
            (&mut self.by_subject, t.subject),
            (&mut self.by_object, t.object),
            (&mut self.by_predicate, t.predicate),
        ] {
            if let Some(set) = index.get_mut(&key) {
                set.remove(&id);
                if set.is_empty() {
                    index.remove(&key);
                }
            }
        }
        Some(t)
    }

    /// Tags an element as superseded by a later pass.
    pub(crate) fn supersede(&mut self, id: ContentId) {
        if self.elements.contains_key(&id) {
            self.superseded.insert(id);
        }
    }

    pub(crate) fn reactivate(&mut self, id: ContentId) {
        self.superseded.remove(&id);
    }

    pub fn element(&self, id: &ContentId) -> Option<&Element> {
        self.elements.get(id)
    }

    pub fn triple(&self, id: &ContentId) -> Option<&Triple> {
        self.triples.get(id)
    }

    pub fn contains(&self, id: &ContentId) -> bool {
        self.elements.contains_key(id) || self.triples.contains_key(id)
    }

    pub fn is_superseded(&self, id: &ContentId) -> bool {
        self.superseded.contains(id)
    }

    pub fn is_active(&self, id: &ContentId) -> bool {
        self.elements.contains_key(id) && !self.superseded.contains(id)
    }

    /// Elements in id order, superseded ones included.
    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.elements.values()
    }

    pub fn active_elements(&self) -> impl Iterator<Item = &Element> {
        self.elements
            .values()
            .filter(|e| !self.superseded.contains(&e.id))
    }

    pub fn active_of_kind(&self, kind: ElementKind) -> impl Iterator<Item = &Element> {
        self.active_elements().filter(move |e| e.kind == kind)
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.values()
    }

    pub fn superseded(&self) -> impl Iterator<Item = &ContentId> {
        self.superseded.iter()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn children(&self, id: &ContentId) -> impl Iterator<Item = &Element> {
        self.children
            .get(id)
            .into_iter()
            .flatten()
            .filter_map(|c| self.elements.get(c))
    }

    pub fn triples_with_subject(&self, id: ContentId) -> impl Iterator<Item = &Triple> {
        self.lookup(&self.by_subject, id)
    }

    pub fn triples_with_object(&self, id: ContentId) -> impl Iterator<Item = &Triple> {
        self.lookup(&self.by_object, id)
    }

    pub fn triples_with_predicate(&self, id: ContentId) -> impl Iterator<Item = &Triple> {
        self.lookup(&self.by_predicate, id)
    }

    fn lookup<'a>(
        &'a self,
        index: &'a BTreeMap<ContentId, BTreeSet<ContentId>>,
        key: ContentId,
    ) -> impl Iterator<Item = &'a Triple> + 'a {
        index
            .get(&key)
            .into_iter()
            .flatten()
            .filter_map(|t| self.triples.get(t))
    }

    /// Triples touching `id` in any position.
    pub fn triples_mentioning(&self, id: ContentId) -> BTreeSet<ContentId> {
        let mut out = BTreeSet::new();
        for index in [&self.by_subject, &self.by_object, &self.by_predicate] {
            if let Some(set) = index.get(&id) {
                out.extend(set.iter().copied());
            }
        }
        out
    }

    pub fn has_triple(&self, predicate: ContentId, subject: ContentId, object: ContentId) -> bool {
        self.triples.contains_key(&triple_id(predicate, subject, object))
    }

    /// Digest over the sorted element, triple and superseded id sets.
    pub fn graph_id(&self) -> ContentId {
        let mut text = String::with_capacity((self.elements.len() + self.triples.len()) * 67);
        for id in self.elements.keys() {
            text.push_str("E ");
            text.push_str(&id.to_hex());
            text.push('\n');
        }
        for id in self.triples.keys() {
            text.push_str("T ");
            text.push_str(&id.to_hex());
            text.push('\n');
        }
        for id in &self.superseded {
            text.push_str("S ");
            text.push_str(&id.to_hex());
            text.push('\n');
        }
        content_id(text.as_bytes())
    }

    /// Recomputes every element and triple id from its canonical bytes.
    pub fn audit_identities(&self) -> Result<(), GraphError> {
        for (stored, e) in &self.elements {
            let computed = e.recompute_id();
            if *stored != computed || e.id != computed {
                return Err(GraphError::IdentityMismatch {
                    stored: *stored,
                    computed,
                });
            }
        }
        for (stored, t) in &self.triples {
            let computed = triple_id(t.predicate, t.subject, t.object);
            if *stored != computed {
                return Err(GraphError::IdentityMismatch {
                    stored: *stored,
                    computed,
                });
            }
        }
        Ok(())
    }

    /// Every parent and triple endpoint resolves.
    pub fn check_closure(&self) -> Result<(), GraphError> {
        for e in self.elements.values() {
            if let Some(p) = e.parents.iter().find(|p| !self.elements.contains_key(p)) {
                return Err(GraphError::DanglingReference(*p));
            }
        }
        for t in self.triples.values() {
            for end in [t.predicate, t.subject, t.object] {
                if !self.elements.contains_key(&end) {
                    return Err(GraphError::DanglingReference(end));
                }
            }
        }
        Ok(())
    }

    /// Whether the subtypeOf triples are free of cycles.
    pub fn subtype_acyclic(&self) -> bool {
        let edges: Vec<_> = self
            .triples_with_predicate(reserved::subtype_of())
            .map(|t| (t.subject, t.object))
            .collect();
        !edges
            .iter()
            .any(|(s, o)| s == o || self.subtype_reaches(*o, *s))
    }

    pub fn export_dot(&self, filter: &DotFilter) -> String {
        dot::render(self, filter)
    }

    /// One `<pred>\t<subj>\t<obj>` line per triple, sorted, LF terminated.
    pub fn export_triples(&self) -> String {
        let mut lines: Vec<String> = self
            .triples
            .values()
            .map(|t| format!("{}\t{}\t{}\n", t.predicate, t.subject, t.object))
            .collect();
        lines.sort();
        lines.concat()
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            elements: self.elements.values().cloned().collect(),
            triples: self.triples.values().copied().collect(),
            superseded: self.superseded.iter().copied().collect(),
        }
    }

    /// Rebuilds a graph from its serialized form, auditing every id.
    pub fn from_document(doc: GraphDocument) -> Result<Self, GraphError> {
        let mut graph = UnifiedGraph::new();
        for e in &doc.elements {
            let computed = e.recompute_id();
            if computed != e.id {
                return Err(GraphError::IdentityMismatch {
                    stored: e.id,
                    computed,
                });
            }
        }
        for e in doc.elements {
            for parent in &e.parents {
                graph.children.entry(*parent).or_default().insert(e.id);
            }
            graph.elements.insert(e.id, e);
        }
        for t in doc.triples {
            if triple_id(t.predicate, t.subject, t.object) != t.id {
                return Err(GraphError::IdentityMismatch {
                    stored: t.id,
                    computed: triple_id(t.predicate, t.subject, t.object),
                });
            }
            graph.index_triple(&t);
            graph.triples.insert(t.id, t);
        }
        graph.superseded = doc.superseded.into_iter().collect();
        graph.check_closure()?;
        Ok(graph)
    }

    /// Active element counts per kind and per generality level.
    pub fn stats(&self) -> GraphStats {
        let mut stats = GraphStats::default();
        for e in self.elements.values() {
            if self.superseded.contains(&e.id) {
                stats.superseded += 1;
                continue;
            }
            *stats.by_kind.entry(e.kind.name().to_string()).or_default() += 1;
            *stats
                .by_generality
                .entry(e.kind.generality().name().to_string())
                .or_default() += 1;
        }
        stats.elements = self.elements.len();
        stats.triples = self.triples.len();
        stats
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub elements: usize,
    pub triples: usize,
    pub superseded: usize,
    pub by_kind: BTreeMap<String, usize>,
    pub by_generality: BTreeMap<String, usize>,
}

/// Serialized form of a graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDocument {
    pub elements: Vec<Element>,
    pub triples: Vec<Triple>,
    pub superseded: Vec<ContentId>,
}
