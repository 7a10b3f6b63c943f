//! Inspectability: an append-only log of trace edges linking every item to
//! the items it was derived from.
//!
//! Items are plain [`ContentId`]s: snapshot chunks, elements, triples and
//! report queries all share the same id space. Tracing walks the log
//! backwards from an item; tracking walks it forwards.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::{content_id, ContentId, UnifiedGraph};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProvenanceError {
    #[error("{kind} edge from {transform} needs non-empty {endpoint}")]
    EmptyEndpoint {
        kind: EdgeKind,
        transform: String,
        endpoint: &'static str,
    },
    #[error("{transform} would make {item} its own ancestor")]
    Cycle { transform: String, item: ContentId },
    #[error("{item} has {} distinct successors in one run", successors.len())]
    AmbiguousAlias {
        item: ContentId,
        successors: Vec<ContentId>,
    },
    #[error("provenance log line {line}: {reason}")]
    MalformedLog { line: usize, reason: String },
}

/// Identity of a pipeline run, derived from its inputs rather than the clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunId(pub ContentId);

impl RunId {
    pub fn derive(config_hash: ContentId, snapshot_ids: &[ContentId]) -> RunId {
        let mut sorted: Vec<_> = snapshot_ids.to_vec();
        sorted.sort();
        sorted.dedup();
        let mut set = String::new();
        for id in &sorted {
            set.push_str(&id.to_hex());
            set.push('\n');
        }
        let snapshot_set = content_id(set.as_bytes());
        RunId(content_id(
            format!("run|{config_hash}|{snapshot_set}").as_bytes(),
        ))
    }
}

impl fmt::Display for RunId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Derived,
    Renamed,
    Merged,
    Cleaned,
    Seeded,
}

impl EdgeKind {
    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::Derived => "derived",
            EdgeKind::Renamed => "renamed",
            EdgeKind::Merged => "merged",
            EdgeKind::Cleaned => "cleaned",
            EdgeKind::Seeded => "seeded",
        }
    }

    /// Kinds followed by alias resolution.
    pub fn is_alias(self) -> bool {
        matches!(self, EdgeKind::Renamed | EdgeKind::Merged)
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EdgeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "derived" => EdgeKind::Derived,
            "renamed" => EdgeKind::Renamed,
            "merged" => EdgeKind::Merged,
            "cleaned" => EdgeKind::Cleaned,
            "seeded" => EdgeKind::Seeded,
            other => return Err(format!("unknown edge kind {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEdge {
    pub sources: Vec<ContentId>,
    pub targets: Vec<ContentId>,
    pub transform: String,
    pub run: RunId,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Back,
    Forward,
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "back" => Ok(Direction::Back),
            "forward" => Ok(Direction::Forward),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

/// Edges reachable from an item in one direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lineage {
    pub item: ContentId,
    pub edges: BTreeSet<usize>,
    pub items: BTreeSet<ContentId>,
}

impl Lineage {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProvenanceStore {
    edges: Vec<TraceEdge>,
    by_source: BTreeMap<ContentId, Vec<usize>>,
    by_target: BTreeMap<ContentId, Vec<usize>>,
}

impl ProvenanceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_trace(
        &mut self,
        sources: Vec<ContentId>,
        targets: Vec<ContentId>,
        transform: impl Into<String>,
        run: RunId,
        kind: EdgeKind,
    ) -> Result<usize, ProvenanceError> {
        let transform = transform.into();
        if targets.is_empty() {
            return Err(ProvenanceError::EmptyEndpoint {
                kind,
                transform,
                endpoint: "targets",
            });
        }
        if sources.is_empty() && kind != EdgeKind::Seeded {
            return Err(ProvenanceError::EmptyEndpoint {
                kind,
                transform,
                endpoint: "sources",
            });
        }
        if let Some(item) = sources.iter().find(|s| targets.contains(s)) {
            return Err(ProvenanceError::Cycle {
                transform,
                item: *item,
            });
        }
        Ok(self.push(TraceEdge {
            sources,
            targets,
            transform,
            run,
            kind,
        }))
    }

    fn push(&mut self, edge: TraceEdge) -> usize {
        let index = self.edges.len();
        for s in &edge.sources {
            self.by_source.entry(*s).or_default().push(index);
        }
        for t in &edge.targets {
            self.by_target.entry(*t).or_default().push(index);
        }
        self.edges.push(edge);
        index
    }

    /// Appends every edge of `other` in order.
    pub fn extend(&mut self, other: &ProvenanceStore) {
        for edge in &other.edges {
            self.push(edge.clone());
        }
    }

    pub fn edges(&self) -> &[TraceEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn mentions(&self, item: &ContentId) -> bool {
        self.by_source.contains_key(item) || self.by_target.contains_key(item)
    }

    pub fn edges_into(&self, item: &ContentId) -> impl Iterator<Item = &TraceEdge> {
        self.by_target
            .get(item)
            .into_iter()
            .flatten()
            .map(|i| &self.edges[*i])
    }

    pub fn edges_from(&self, item: &ContentId) -> impl Iterator<Item = &TraceEdge> {
        self.by_source
            .get(item)
            .into_iter()
            .flatten()
            .map(|i| &self.edges[*i])
    }

    /// Ancestry of `item`: every edge that leads to it, transitively.
    pub fn trace_back(&self, item: ContentId) -> Lineage {
        self.walk(item, Direction::Back)
    }

    /// Descendants of `item`.
    pub fn track_forward(&self, item: ContentId) -> Lineage {
        self.walk(item, Direction::Forward)
    }

    pub fn walk(&self, item: ContentId, direction: Direction) -> Lineage {
        let (index, next): (_, fn(&TraceEdge) -> &Vec<ContentId>) = match direction {
            Direction::Back => (&self.by_target, |e| &e.sources),
            Direction::Forward => (&self.by_source, |e| &e.targets),
        };
        let mut edges = BTreeSet::new();
        let mut items = BTreeSet::from([item]);
        let mut queue = VecDeque::from([item]);
        while let Some(current) = queue.pop_front() {
            for &i in index.get(&current).into_iter().flatten() {
                if !edges.insert(i) {
                    continue;
                }
                for n in next(&self.edges[i]) {
                    if items.insert(*n) {
                        queue.push_back(*n);
                    }
                }
            }
        }
        Lineage { item, edges, items }
    }

    /// Follows renamed/merged edges to the latest successor.
    pub fn resolve_alias(&self, item: ContentId) -> Result<ContentId, ProvenanceError> {
        let mut current = item;
        let mut visited = BTreeSet::from([item]);
        loop {
            let mut per_run: BTreeMap<RunId, BTreeSet<ContentId>> = BTreeMap::new();
            let mut latest: Option<(usize, ContentId)> = None;
            for &i in self.by_source.get(&current).into_iter().flatten() {
                let edge = &self.edges[i];
                if !edge.kind.is_alias() {
                    continue;
                }
                let set = per_run.entry(edge.run).or_default();
                set.extend(edge.targets.iter().copied());
                if let Some(t) = edge.targets.last() {
                    latest = Some((i, *t));
                }
            }
            if let Some(set) = per_run.values().find(|s| s.len() > 1) {
                return Err(ProvenanceError::AmbiguousAlias {
                    item: current,
                    successors: set.iter().copied().collect(),
                });
            }
            match latest {
                Some((_, next)) if visited.insert(next) => current = next,
                _ => return Ok(current),
            }
        }
    }

    /// Items in dependency order, or the first item found on a cycle.
    pub fn topological_order(&self) -> Result<Vec<ContentId>, ContentId> {
        let mut indegree: BTreeMap<ContentId, usize> = BTreeMap::new();
        let mut successors: BTreeMap<ContentId, BTreeSet<ContentId>> = BTreeMap::new();
        for edge in &self.edges {
            for t in &edge.targets {
                indegree.entry(*t).or_default();
            }
            for s in &edge.sources {
                indegree.entry(*s).or_default();
                for t in &edge.targets {
                    if successors.entry(*s).or_default().insert(*t) {
                        *indegree.entry(*t).or_default() += 1;
                    }
                }
            }
        }
        let mut ready: VecDeque<_> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut order = Vec::with_capacity(indegree.len());
        while let Some(id) = ready.pop_front() {
            order.push(id);
            for next in successors.get(&id).into_iter().flatten() {
                let d = indegree.get_mut(next).expect("indexed");
                *d -= 1;
                if *d == 0 {
                    ready.push_back(*next);
                }
            }
        }
        if order.len() == indegree.len() {
            Ok(order)
        } else {
            let placed: BTreeSet<_> = order.into_iter().collect();
            Err(*indegree
                .keys()
                .find(|id| !placed.contains(id))
                .expect("some item left over"))
        }
    }

    /// Elements of `graph` that are reachable from neither a root item (a
    /// snapshot chunk) nor the target of a seeded edge.
    pub fn unreached_elements(
        &self,
        graph: &UnifiedGraph,
        roots: &BTreeSet<ContentId>,
    ) -> Vec<ContentId> {
        let mut reached: BTreeSet<ContentId> = roots.clone();
        let mut queue: VecDeque<ContentId> = roots.iter().copied().collect();
        for edge in self.edges.iter().filter(|e| e.kind == EdgeKind::Seeded) {
            for t in &edge.targets {
                if reached.insert(*t) {
                    queue.push_back(*t);
                }
            }
        }
        while let Some(item) = queue.pop_front() {
            for edge in self.edges_from(&item) {
                for t in &edge.targets {
                    if reached.insert(*t) {
                        queue.push_back(*t);
                    }
                }
            }
        }
        graph
            .elements()
            .map(|e| e.id)
            .filter(|id| !reached.contains(id))
            .collect()
    }

    /// One edge per line: `kind\ttransform\trunHex\tsources\ttargets`.
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let join = |ids: &[ContentId]| {
                ids.iter()
                    .map(ContentId::to_hex)
                    .collect::<Vec<_>>()
                    .join(",")
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                e.kind,
                e.transform,
                e.run,
                join(&e.sources),
                join(&e.targets)
            );
        }
        out
    }

    pub fn from_log(text: &str) -> Result<Self, ProvenanceError> {
        let mut store = ProvenanceStore::new();
        for (n, line) in text.lines().enumerate() {
            let bad = |reason: String| ProvenanceError::MalformedLog {
                line: n + 1,
                reason,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(bad(format!("expected 5 fields, found {}", fields.len())));
            }
            let ids = |s: &str| -> Result<Vec<ContentId>, ProvenanceError> {
                if s.is_empty() {
                    return Ok(Vec::new());
                }
                s.split(',')
                    .map(|h| h.parse().map_err(|e: crate::graph::ParseContentIdError| bad(e.to_string())))
                    .collect()
            };
            store.push(TraceEdge {
                kind: fields[0].parse().map_err(bad)?,
                transform: fields[1].to_string(),
                run: RunId(fields[2].parse().map_err(|e: crate::graph::ParseContentIdError| bad(e.to_string()))?),
                sources: ids(fields[3])?,
                targets: ids(fields[4])?,
            });
        }
        Ok(store)
    }

    /// DOT rendering of an item's ancestry or descendants.
    pub fn export_ontogenic_tree(
        &self,
        item: ContentId,
        direction: Direction,
        label: &dyn Fn(ContentId) -> String,
    ) -> String {
        let lineage = self.walk(item, direction);
        let mut out = String::from("digraph ontogeny {\n");
        for id in &lineage.items {
            let _ = writeln!(
                out,
                "  \"{}\" [label=\"{}\"];",
                id,
                crate::graph::dot_escape(&label(*id))
            );
        }
        let mut lines = BTreeSet::new();
        for &i in &lineage.edges {
            let e = &self.edges[i];
            for s in &e.sources {
                for t in &e.targets {
                    if lineage.items.contains(s) && lineage.items.contains(t) {
                        lines.insert(format!(
                            "  \"{}\" -> \"{}\" [label=\"{} {}\"];\n",
                            s,
                            t,
                            crate::graph::dot_escape(&e.transform),
                            e.kind
                        ));
                    }
                }
            }
        }
        for line in lines {
            out.push_str(&line);
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> ContentId {
        content_id(s.as_bytes())
    }

    fn run() -> RunId {
        RunId(id("run"))
    }

    /// A small merge scenario: chunk -> rows -> cells, cleaned, two rows merged.
    fn fixture() -> ProvenanceStore {
        let mut s = ProvenanceStore::new();
        s.record_trace(vec![id("chunk")], vec![id("rowA"), id("rowB"), id("cell")], "load", run(), EdgeKind::Derived).unwrap();
        s.record_trace(vec![id("cell")], vec![id("cell'")], "clean", run(), EdgeKind::Cleaned).unwrap();
        s.record_trace(vec![id("cell'")], vec![id("value")], "unify", run(), EdgeKind::Derived).unwrap();
        s.record_trace(vec![id("rowA"), id("rowB")], vec![id("merged")], "merge", run(), EdgeKind::Merged).unwrap();
        s.record_trace(vec![id("chunk")], vec![id("dropped")], "load", run(), EdgeKind::Derived).unwrap();
        s
    }

    /// Brute-force reverse reachability: iterate to a fixed point over all edges.
    fn oracle_ancestors(store: &ProvenanceStore, item: ContentId) -> BTreeSet<ContentId> {
        let mut set = BTreeSet::from([item]);
        loop {
            let before = set.len();
            for e in store.edges() {
                if e.targets.iter().any(|t| set.contains(t)) {
                    set.extend(e.sources.iter().copied());
                }
            }
            if set.len() == before {
                return set;
            }
        }
    }

    fn oracle_descendants(store: &ProvenanceStore, item: ContentId) -> BTreeSet<ContentId> {
        let mut set = BTreeSet::from([item]);
        loop {
            let before = set.len();
            for e in store.edges() {
                if e.sources.iter().any(|s| set.contains(s)) {
                    set.extend(e.targets.iter().copied());
                }
            }
            if set.len() == before {
                return set;
            }
        }
    }

    #[test]
    fn record_examples() {
        let mut s = ProvenanceStore::new();
        s.record_trace(vec![id("old")], vec![id("new")], "clean", run(), EdgeKind::Cleaned).unwrap();
        s.record_trace(vec![id("a"), id("b")], vec![id("m")], "merge", run(), EdgeKind::Merged).unwrap();
        s.record_trace(vec![], vec![id("seed")], "seed", run(), EdgeKind::Seeded).unwrap();
        assert_eq!(s.len(), 3);
        let err = s
            .record_trace(vec![], vec![id("x")], "clean", run(), EdgeKind::Cleaned)
            .unwrap_err();
        assert!(matches!(err, ProvenanceError::EmptyEndpoint { endpoint: "sources", .. }));
        assert!(s.record_trace(vec![id("x")], vec![], "t", run(), EdgeKind::Derived).is_err());
    }

    #[test]
    fn trace_back_matches_reverse_reachability() {
        let s = fixture();
        assert!(s.trace_back(id("chunk")).is_empty());
        assert!(s.trace_back(id("unknown")).is_empty());
        let merged = s.trace_back(id("merged"));
        assert_eq!(merged.items, oracle_ancestors(&s, id("merged")));
        assert!(merged.items.contains(&id("rowA")) && merged.items.contains(&id("rowB")));
    }

    #[test]
    fn track_forward_matches_forward_reachability() {
        let s = fixture();
        assert!(s.track_forward(id("merged")).is_empty());
        let cell = s.track_forward(id("cell"));
        assert_eq!(cell.items, oracle_descendants(&s, id("cell")));
        assert!(cell.items.contains(&id("cell'")) && cell.items.contains(&id("value")));
        let dropped = s.track_forward(id("dropped"));
        assert!(dropped.is_empty());
    }

    #[test]
    fn alias_resolution() {
        let mut s = ProvenanceStore::new();
        assert_eq!(s.resolve_alias(id("col")).unwrap(), id("col"));
        s.record_trace(vec![id("col")], vec![id("col1")], "r1", run(), EdgeKind::Renamed).unwrap();
        s.record_trace(vec![id("col1")], vec![id("col2")], "r2", run(), EdgeKind::Renamed).unwrap();
        assert_eq!(s.resolve_alias(id("col")).unwrap(), id("col2"));
        let once = s.resolve_alias(id("col")).unwrap();
        assert_eq!(s.resolve_alias(once).unwrap(), once);

        s.record_trace(vec![id("x")], vec![id("m1")], "merge", run(), EdgeKind::Merged).unwrap();
        s.record_trace(vec![id("x")], vec![id("m2")], "merge", run(), EdgeKind::Merged).unwrap();
        assert!(matches!(
            s.resolve_alias(id("x")),
            Err(ProvenanceError::AmbiguousAlias { .. })
        ));
    }

    #[test]
    fn log_round_trip_and_determinism() {
        let s = fixture();
        let text = s.to_log();
        assert_eq!(ProvenanceStore::from_log(&text).unwrap(), s);
        assert_eq!(text, fixture().to_log());
        assert!(ProvenanceStore::from_log("derived\tt\n").is_err());
    }

    #[test]
    fn topological_sort_succeeds_on_fixture() {
        let order = fixture().topological_order().unwrap();
        let pos = |x: &str| order.iter().position(|i| *i == id(x)).unwrap();
        assert!(pos("chunk") < pos("rowA"));
        assert!(pos("rowA") < pos("merged"));
    }

    #[test]
    fn ontogenic_tree_exports() {
        let s = fixture();
        let label = |i: ContentId| i.short();
        let root = s.export_ontogenic_tree(id("chunk"), Direction::Back, &label);
        assert_eq!(root.matches("[label=").count(), 1);
        let merged = s.export_ontogenic_tree(id("merged"), Direction::Back, &label);
        assert!(merged.contains(&format!("\"{}\" -> \"{}\"", id("rowA"), id("merged"))));
        assert!(merged.contains(&format!("\"{}\" -> \"{}\"", id("rowB"), id("merged"))));
        assert_eq!(merged, s.export_ontogenic_tree(id("merged"), Direction::Back, &label));
    }
}
