use crate::graph::{ContentId, ElementKind, GraphError, UnifiedGraph};
use crate::provenance::{EdgeKind, ProvenanceError, ProvenanceStore, RunId};

/// What a pass needs to record its trace edges.
pub struct PassContext<'a> {
    pub store: &'a mut ProvenanceStore,
    pub run: RunId,
    pub transform: String,
}

impl<'a> PassContext<'a> {
    pub fn new(store: &'a mut ProvenanceStore, run: RunId, transform: impl Into<String>) -> Self {
        PassContext {
            store,
            run,
            transform: transform.into(),
        }
    }

    pub fn trace(
        &mut self,
        sources: Vec<ContentId>,
        targets: Vec<ContentId>,
        kind: EdgeKind,
    ) -> Result<usize, ProvenanceError> {
        self.store
            .record_trace(sources, targets, self.transform.clone(), self.run, kind)
    }

    /// Same edge, labelled with a sub-step of the current transform.
    pub fn trace_step(
        &mut self,
        step: &str,
        sources: Vec<ContentId>,
        targets: Vec<ContentId>,
        kind: EdgeKind,
    ) -> Result<usize, ProvenanceError> {
        let transform = format!("{}:{step}", self.transform);
        self.store
            .record_trace(sources, targets, transform, self.run, kind)
    }

    pub fn edges_recorded_since(&self, mark: usize) -> usize {
        self.store.len() - mark
    }
}

/// Inserts a reserved relation when missing and records a seeded edge the
/// first time the store sees it.
pub fn ensure_relation<E>(
    graph: &mut UnifiedGraph,
    ctx: &mut PassContext<'_>,
    payload: &str,
) -> Result<ContentId, E>
where
    E: From<GraphError> + From<ProvenanceError>,
{
    let id = graph.add_element(ElementKind::RelationType, vec![], payload, &ctx.transform)?;
    if !ctx.store.mentions(&id) {
        ctx.trace_step("reserve", vec![], vec![id], EdgeKind::Seeded)?;
    }
    Ok(id)
}
