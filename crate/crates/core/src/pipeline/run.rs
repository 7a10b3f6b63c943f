use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::assimilate::{assimilate, AssimilatedModel};
use crate::collect::{Snapshot, DEFAULT_CHUNK_SIZE};
use crate::evolve::{
    clean_pass, infer_foreign_keys, integrate_sources, rewrite_recoded_queries, unify_types, FkParams,
    IntegrationMapping,
};
use crate::graph::{content_id, ContentId, UnifiedGraph};
use crate::load::{load_delimited_text, load_table, LoadedSource, TableSpec};
use crate::onto::{
    apply_seed, dere_transform, export_definitions, extract_definitions, identity_merge, rewrite_dere_queries,
    IdentityCriterion,
};
use crate::pass::PassContext;
use crate::provenance::{EdgeKind, ProvenanceStore, RunId};
use crate::reuse::{reuse_export, ExportFormat};
use crate::verify::{Filter, ReportQuery, VerifierContext};

use super::gate::{run_gate, ActionOutcome, GateOutcome};
use super::workspace::write_atomic;
use super::{BUnitError, BUnitRegistry, PipelineConfig, PipelineError, SliceConfig, StageType, Workspace};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub parallel_slices: bool,
    pub registry: BUnitRegistry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BUnitReport {
    /// Slice name, or `model` for assimilate and reuse stages.
    pub scope: String,
    pub stage: usize,
    pub stage_type: StageType,
    pub index: usize,
    pub kind: String,
    pub input_graph: ContentId,
    pub output_graph: ContentId,
    pub element_delta: i64,
    pub triple_delta: i64,
    pub edges: usize,
    pub no_change: bool,
    pub duration_us: u64,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceRecord {
    pub name: String,
    pub final_graph: ContentId,
    pub provenance_start: usize,
    pub provenance_len: usize,
    /// Source path → snapshot id.
    pub snapshots: BTreeMap<String, ContentId>,
    pub verifier: VerifierContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: RunId,
    pub name: String,
    pub run_root: ContentId,
    /// False when an integrity gate stopped the run.
    pub completed: bool,
    pub bunits: Vec<BUnitReport>,
    pub gates: Vec<GateOutcome>,
    pub slices: Vec<SliceRecord>,
    pub model: Option<ContentId>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.completed && self.gates.iter().all(|g| g.passed)
    }

    pub fn failed_gates(&self) -> impl Iterator<Item = &GateOutcome> {
        self.gates.iter().filter(|g| !g.passed)
    }

    /// Graphs definitions and exports are read from: the model when there
    /// is one, otherwise each slice's final graph.
    pub fn final_graphs(&self) -> Vec<(String, ContentId)> {
        match self.model {
            Some(m) => vec![("model".to_string(), m)],
            None => self
                .slices
                .iter()
                .map(|s| (s.name.clone(), s.final_graph))
                .collect(),
        }
    }
}

/// `content_id` over the output graph ids in execution order.
pub fn run_root(bunits: &[BUnitReport]) -> ContentId {
    let mut text = String::new();
    for b in bunits {
        text.push_str(&b.output_graph.to_hex());
        text.push('\n');
    }
    content_id(text.as_bytes())
}

struct Source {
    rel: String,
    bytes: Vec<u8>,
}

fn relative_name(base: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(base).unwrap_or(path);
    rel.components()
        .filter_map(|c| match c {
            Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
            _ => None,
        })
        .collect::<Vec<_>>()
        .join("/")
}

fn gather_sources(config: &PipelineConfig, slice: &SliceConfig) -> Result<Vec<Source>, PipelineError> {
    let base = glob::Pattern::escape(&config.base_dir.to_string_lossy());
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for pattern in &slice.sources {
        let full = if base.is_empty() {
            pattern.clone()
        } else {
            format!("{base}/{pattern}")
        };
        let paths = glob::glob(&full).map_err(|e| PipelineError::BadPattern {
            slice: slice.name.clone(),
            pattern: pattern.clone(),
            reason: e.to_string(),
        })?;
        let mut matched: Vec<PathBuf> = paths.filter_map(Result::ok).filter(|p| p.is_file()).collect();
        matched.sort();
        if matched.is_empty() {
            return Err(PipelineError::MissingSource {
                slice: slice.name.clone(),
                pattern: pattern.clone(),
            });
        }
        for path in matched {
            let rel = relative_name(&config.base_dir, &path);
            if seen.insert(rel.clone()) {
                let bytes = fs::read(&path).map_err(|source| PipelineError::IoFailure { path, source })?;
                out.push(Source { rel, bytes });
            }
        }
    }
    if let Some(t) = slice.tables.iter().find(|t| !seen.contains(&t.source)) {
        return Err(PipelineError::MissingSource {
            slice: slice.name.clone(),
            pattern: t.source.clone(),
        });
    }
    Ok(out)
}

fn config_hash(config: &PipelineConfig) -> Result<ContentId, PipelineError> {
    let mut buf = config.text.as_bytes().to_vec();
    for rel in config.parameter_files() {
        let path = config.resolve(&rel);
        let bytes = fs::read(&path).map_err(|source| PipelineError::IoFailure { path, source })?;
        buf.push(0);
        buf.extend_from_slice(rel.as_bytes());
        buf.push(0);
        buf.extend_from_slice(content_id(&bytes).as_bytes());
    }
    Ok(content_id(&buf))
}

/// Ids a query refers to, as the store currently resolves them.
fn query_refs(store: &ProvenanceStore, q: &ReportQuery) -> Result<Vec<ContentId>, BUnitError> {
    let mut ids = BTreeSet::from([q.target, q.aggregate]);
    ids.extend(q.group_by);
    for f in &q.filters {
        match f {
            Filter::Attribute { column, .. } => ids.insert(*column),
            Filter::Relation { object, relation } => {
                ids.insert(*object);
                ids.insert(*relation)
            }
        };
    }
    let resolved: Result<BTreeSet<ContentId>, _> = ids.into_iter().map(|i| store.resolve_alias(i)).collect();
    Ok(resolved?.into_iter().collect())
}

fn loaded_detail(l: &LoadedSource) -> Value {
    json!({
        "system": l.system,
        "table": l.table,
        "columns": l.columns.len(),
        "rows": l.rows.len(),
    })
}

struct Shared<'a> {
    config: &'a PipelineConfig,
    registry: &'a BUnitRegistry,
    ws: &'a Workspace,
    run: RunId,
}

impl Shared<'_> {
    fn read_param(&self, rel: &str) -> Result<String, BUnitError> {
        let path = self.config.resolve(rel);
        fs::read_to_string(&path).map_err(|e| BUnitError::Parameter {
            path,
            reason: e.to_string(),
        })
    }
}

struct SliceRun<'a> {
    shared: &'a Shared<'a>,
    slice: &'a SliceConfig,
    sources: Vec<Source>,
    graph: UnifiedGraph,
    store: ProvenanceStore,
    verifier: VerifierContext,
    snapshots: BTreeMap<String, Snapshot>,
    bunits: Vec<BUnitReport>,
    gates: Vec<GateOutcome>,
    files: BTreeMap<PathBuf, Vec<u8>>,
    halted: bool,
}

impl<'a> SliceRun<'a> {
    fn new(shared: &'a Shared<'a>, slice: &'a SliceConfig, sources: Vec<Source>) -> Self {
        SliceRun {
            shared,
            slice,
            sources,
            graph: UnifiedGraph::new(),
            store: ProvenanceStore::new(),
            verifier: VerifierContext::new(),
            snapshots: BTreeMap::new(),
            bunits: Vec::new(),
            gates: Vec::new(),
            files: BTreeMap::new(),
            halted: false,
        }
    }

    fn run(mut self) -> Result<Self, PipelineError> {
        let config = self.shared.config;
        for (si, stage) in config.stages.iter().enumerate() {
            if stage.stage_type.is_model_phase() {
                break;
            }
            for (bi, b) in stage.bunits.iter().enumerate() {
                self.step(si, stage.stage_type, bi, &b.kind, &b.params)?;
            }
            if stage.stage_type == StageType::Collect {
                let gate = self.integrity(si)?;
                let ok = gate.passed;
                self.gates.push(gate);
                if !ok {
                    self.halted = true;
                    return Ok(self);
                }
            }
            for (gi, gate) in config.gates_after(si) {
                let outcome = run_gate(
                    Some(gi),
                    si,
                    &gate.actions,
                    &self.slice.name,
                    &self.graph,
                    &[&self.verifier],
                    &self.store,
                    &mut self.files,
                );
                self.gates.push(outcome);
            }
        }
        Ok(self)
    }

    fn integrity(&self, after: usize) -> Result<GateOutcome, PipelineError> {
        let store = self.shared.ws.snapshots();
        let mut failures = Vec::new();
        for (rel, snap) in &self.snapshots {
            let verdict = store.verify_snapshot(snap).map_err(|e| PipelineError::BUnit {
                slice: self.slice.name.clone(),
                stage: after,
                bunit: 0,
                kind: "integrity".into(),
                source: e.into(),
            })?;
            if let crate::collect::Verification::Fail(list) = verdict {
                for f in list {
                    failures.push(format!(
                        "snapshot {} of {rel}: chunk {} ({}) hashes to {}, manifest says {}",
                        snap.id,
                        f.index,
                        f.path.display(),
                        f.actual,
                        f.expected
                    ));
                }
            }
        }
        Ok(GateOutcome {
            gate: None,
            after,
            label: format!("integrity-{after}"),
            scope: self.slice.name.clone(),
            graph: self.graph.graph_id(),
            provenance_start: 0,
            provenance_len: self.store.len(),
            passed: failures.is_empty(),
            actions: vec![ActionOutcome::Integrity {
                snapshots: self.snapshots.len(),
                failures,
            }],
            verifiers: Vec::new(),
        })
    }

    fn step(&mut self, si: usize, st: StageType, bi: usize, kind: &str, params: &[String]) -> Result<(), PipelineError> {
        let input = self.graph.graph_id();
        let (elements, triples) = (self.graph.element_count(), self.graph.triple_count());
        let mark = self.store.len();
        let started = Instant::now();
        let wrap = |source: BUnitError| PipelineError::BUnit {
            slice: self.slice.name.clone(),
            stage: si,
            bunit: bi,
            kind: kind.to_string(),
            source,
        };
        let detail = match self.execute(&format!("{si}-{st}"), kind, params) {
            Ok(d) => d,
            Err(e) => return Err(wrap(e)),
        };
        let output = self.graph.graph_id();
        let edges = self.store.len() - mark;
        if edges == 0 && output != input {
            return Err(wrap(BUnitError::Untraced));
        }
        self.shared.ws.write_graph(&self.graph)?;
        self.bunits.push(BUnitReport {
            scope: self.slice.name.clone(),
            stage: si,
            stage_type: st,
            index: bi,
            kind: kind.to_string(),
            input_graph: input,
            output_graph: output,
            element_delta: self.graph.element_count() as i64 - elements as i64,
            triple_delta: self.graph.triple_count() as i64 - triples as i64,
            edges,
            no_change: edges == 0,
            duration_us: started.elapsed().as_micros() as u64,
            detail,
        });
        Ok(())
    }

    fn execute(&mut self, stage_label: &str, kind: &str, params: &[String]) -> Result<Value, BUnitError> {
        let shared = self.shared;
        let mut ctx = PassContext::new(&mut self.store, shared.run, kind);
        let detail = match kind {
            "collect" => {
                let snapshots = shared.ws.snapshots();
                let mut out = Vec::new();
                for src in &self.sources {
                    let snap = snapshots.collect_bytes(&src.bytes, &src.rel, DEFAULT_CHUNK_SIZE)?;
                    if !ctx.store.mentions(&snap.id) {
                        let chunks: BTreeSet<ContentId> = snap.chunk_ids().collect();
                        ctx.trace_step("snapshot", chunks.into_iter().collect(), vec![snap.id], EdgeKind::Derived)?;
                    }
                    out.push(json!({"source": src.rel, "snapshot": snap.id, "chunks": snap.chunks.len()}));
                    self.snapshots.insert(src.rel.clone(), snap);
                }
                json!({ "snapshots": out })
            }
            "load_table" | "load_delimited_text" => {
                let store = shared.ws.snapshots();
                let mut out = Vec::new();
                let want_spec = kind == "load_table";
                for t in self.slice.tables.iter().filter(|t| t.spec.is_some() == want_spec) {
                    let snap = self
                        .snapshots
                        .get(&t.source)
                        .ok_or_else(|| BUnitError::NotCollected(t.source.clone()))?;
                    let bytes = store.read_bytes(snap)?;
                    let loaded = match &t.spec {
                        Some(spec) => {
                            let spec = TableSpec::from_json(&shared.read_param(spec)?)?;
                            load_table(&mut self.graph, &mut ctx, snap, &bytes, &spec, &t.system)?
                        }
                        None => {
                            let d = t.delimiter.as_deref().unwrap_or(",").as_bytes()[0];
                            load_delimited_text(&mut self.graph, &mut ctx, snap, &bytes, d, &t.table_name(), &t.system)?
                        }
                    };
                    out.push(loaded_detail(&loaded));
                }
                json!({ "tables": out })
            }
            "register_report" => {
                let mut out = Vec::new();
                for rel in params {
                    let q = ReportQuery::from_json(&shared.read_param(rel)?)?;
                    let name = Path::new(rel)
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| rel.clone());
                    let id = self.verifier.register_report(&self.graph, ctx.store, &name, q.clone())?;
                    if !ctx.store.mentions(&id) {
                        let refs = query_refs(ctx.store, &q)?;
                        ctx.trace_step("query", refs, vec![id], EdgeKind::Derived)?;
                    }
                    out.push(json!({"name": name, "query": id}));
                }
                json!({ "queries": out })
            }
            "snapshot_report" => {
                let sigs = self.verifier.snapshot_all(&self.graph, ctx.store, stage_label)?;
                json!({ "stage": stage_label, "signatures": sigs.len() })
            }
            "clean_pass" => {
                let (g, r) = clean_pass(&self.graph, &mut ctx)?;
                self.graph = g;
                json!({ "changes": r.changes.len() })
            }
            "integrate_sources" => {
                let mapping = IntegrationMapping::from_json(&shared.read_param(&params[0])?)?;
                let (g, r) = integrate_sources(&self.graph, &mut ctx, &mapping)?;
                self.graph = g;
                let rewritten = rewrite_recoded_queries(&mut self.verifier, &mut ctx, &r)?;
                json!({
                    "renamed": r.renamed.len(),
                    "recoded_cells": r.recoded_cells.len(),
                    "rewritten_queries": rewritten,
                })
            }
            "infer_foreign_keys" => {
                let fk = match params.first() {
                    Some(rel) => serde_json::from_str(&shared.read_param(rel)?).map_err(|e| BUnitError::Parameter {
                        path: shared.config.resolve(rel),
                        reason: e.to_string(),
                    })?,
                    None => FkParams::default(),
                };
                let (g, r) = infer_foreign_keys(&self.graph, &mut ctx, fk)?;
                self.graph = g;
                let accepted: Vec<Value> = r
                    .accepted()
                    .map(|c| json!({"referencing": c.referencing, "referenced": c.referenced}))
                    .collect();
                json!({ "candidates": r.candidates.len(), "accepted": accepted })
            }
            "unify_types" => {
                let (g, r) = unify_types(&self.graph, &mut ctx)?;
                self.graph = g;
                serde_json::to_value(r).expect("report serializes")
            }
            "apply_seed" => {
                let (g, r) = apply_seed(&self.graph, &mut ctx)?;
                self.graph = g;
                serde_json::to_value(r).expect("report serializes")
            }
            "identity_merge" => {
                let criterion = IdentityCriterion::from_json(&shared.read_param(&params[0])?)?;
                let (g, merged) = identity_merge(&self.graph, &mut ctx, &criterion)?;
                self.graph = g;
                json!({ "merged": merged })
            }
            "dere_transform" => {
                let (g, r) = dere_transform(&self.graph, &mut ctx)?;
                self.graph = g;
                let rewritten = rewrite_dere_queries(&mut self.verifier, &mut ctx, &r)?;
                json!({
                    "types": r.types.len(),
                    "relational_triples": r.relational_triples,
                    "removed_marks": r.removed_marks,
                    "rewritten_queries": rewritten,
                })
            }
            "extract_definitions" => {
                let defs = extract_definitions(&self.graph)?;
                let path = PathBuf::from("reports").join(format!("definitions-{}.txt", self.slice.name));
                self.files
                    .insert(path.clone(), export_definitions(&self.graph, &defs).into_bytes());
                json!({ "definitions": defs.len(), "path": path })
            }
            other => {
                let pass = shared
                    .registry
                    .custom(other)
                    .ok_or_else(|| BUnitError::Custom(format!("no pass registered for {other}")))?;
                self.graph = pass(&self.graph, &mut ctx).map_err(BUnitError::Custom)?;
                Value::Null
            }
        };
        Ok(detail)
    }
}

struct ModelRun<'a> {
    shared: &'a Shared<'a>,
    slices: &'a [SliceRun<'a>],
    store: ProvenanceStore,
    model: Option<AssimilatedModel>,
    bunits: Vec<BUnitReport>,
    gates: Vec<GateOutcome>,
    files: BTreeMap<PathBuf, Vec<u8>>,
}

impl ModelRun<'_> {
    fn graph(&self) -> UnifiedGraph {
        self.model.as_ref().map(|m| m.graph.clone()).unwrap_or_default()
    }

    fn run(&mut self) -> Result<(), PipelineError> {
        let config = self.shared.config;
        for (si, stage) in config.stages.iter().enumerate() {
            if !stage.stage_type.is_model_phase() {
                continue;
            }
            for (bi, b) in stage.bunits.iter().enumerate() {
                let input = self.graph();
                let mark = self.store.len();
                let started = Instant::now();
                let detail = self.execute(&b.kind, &b.params).map_err(|source| PipelineError::BUnit {
                    slice: "model".into(),
                    stage: si,
                    bunit: bi,
                    kind: b.kind.clone(),
                    source,
                })?;
                let output = self.graph();
                let edges = self.store.len() - mark;
                // Folding a lone slice into an empty model reproduces that
                // slice's graph; its elements are traced already.
                let identity = output.graph_id() == input.graph_id()
                    || self.slices.iter().any(|s| s.graph.graph_id() == output.graph_id());
                if edges == 0 && !identity {
                    return Err(PipelineError::BUnit {
                        slice: "model".into(),
                        stage: si,
                        bunit: bi,
                        kind: b.kind.clone(),
                        source: BUnitError::Untraced,
                    });
                }
                self.shared.ws.write_graph(&output)?;
                self.bunits.push(BUnitReport {
                    scope: "model".into(),
                    stage: si,
                    stage_type: stage.stage_type,
                    index: bi,
                    kind: b.kind.clone(),
                    input_graph: input.graph_id(),
                    output_graph: output.graph_id(),
                    element_delta: output.element_count() as i64 - input.element_count() as i64,
                    triple_delta: output.triple_count() as i64 - input.triple_count() as i64,
                    edges,
                    no_change: edges == 0,
                    duration_us: started.elapsed().as_micros() as u64,
                    detail,
                });
            }
            for (gi, gate) in config.gates_after(si) {
                let verifiers: Vec<&VerifierContext> = self.slices.iter().map(|s| &s.verifier).collect();
                let targets: Vec<(String, UnifiedGraph)> = match &self.model {
                    Some(m) => vec![("model".into(), m.graph.clone())],
                    None => self
                        .slices
                        .iter()
                        .map(|s| (s.slice.name.clone(), s.graph.clone()))
                        .collect(),
                };
                for (scope, graph) in targets {
                    let outcome = run_gate(
                        Some(gi),
                        si,
                        &gate.actions,
                        &scope,
                        &graph,
                        &verifiers,
                        &self.store,
                        &mut self.files,
                    );
                    self.gates.push(outcome);
                }
            }
        }
        Ok(())
    }

    fn execute(&mut self, kind: &str, params: &[String]) -> Result<Value, BUnitError> {
        let shared = self.shared;
        match kind {
            "assimilate" => {
                let mut model = self.model.take().unwrap_or_default();
                let mut reports = Vec::new();
                for s in self.slices {
                    let mut ctx = PassContext::new(&mut self.store, shared.run, kind);
                    let (next, r) = assimilate(&model, &s.slice.name, &s.graph, &mut ctx)?;
                    model = next;
                    reports.push(json!({"slice": s.slice.name, "report": r}));
                }
                self.model = Some(model);
                Ok(json!({ "slices": reports }))
            }
            "reuse_export" => {
                let formats: Vec<ExportFormat> = match params.first() {
                    Some(rel) => {
                        #[derive(Deserialize)]
                        #[serde(deny_unknown_fields)]
                        struct ReuseParams {
                            formats: Vec<ExportFormat>,
                        }
                        let p: ReuseParams =
                            serde_json::from_str(&shared.read_param(rel)?).map_err(|e| BUnitError::Parameter {
                                path: shared.config.resolve(rel),
                                reason: e.to_string(),
                            })?;
                        p.formats
                    }
                    None => vec![ExportFormat::CsvTables],
                };
                let targets: Vec<(String, &UnifiedGraph)> = match &self.model {
                    Some(m) => vec![("model".into(), &m.graph)],
                    None => self.slices.iter().map(|s| (s.slice.name.clone(), &s.graph)).collect(),
                };
                let mut written = Vec::new();
                for (scope, graph) in targets {
                    let dest = shared.ws.reports_dir().join("reuse").join(&scope);
                    for f in &formats {
                        for p in reuse_export(graph, *f, &dest)? {
                            written.push(relative_name(shared.ws.root(), &p));
                        }
                    }
                }
                Ok(json!({ "files": written }))
            }
            other => Err(BUnitError::Custom(format!("{other} cannot run on the model"))),
        }
    }
}

/// Executes `config` against `workspace`. Gate failures are recorded in the
/// report; errors are reserved for configuration, I/O and failing passes.
pub fn run_pipeline(config: &PipelineConfig, workspace: &Workspace, options: &RunOptions) -> Result<RunReport, PipelineError> {
    let _lock = workspace.lock()?;
    let mut slices: Vec<&SliceConfig> = config.slices.iter().collect();
    slices.sort_by(|a, b| a.name.cmp(&b.name));

    let mut sources = Vec::new();
    let mut snapshot_ids = Vec::new();
    for s in &slices {
        let found = gather_sources(config, s)?;
        for src in &found {
            snapshot_ids.push(Snapshot::compute(&src.bytes, &src.rel, DEFAULT_CHUNK_SIZE).expect("non-zero chunk size").id);
        }
        sources.push(found);
    }
    let run = RunId::derive(config_hash(config)?, &snapshot_ids);
    let shared = Shared {
        config,
        registry: &options.registry,
        ws: workspace,
        run,
    };

    let runs: Vec<SliceRun<'_>> = slices
        .iter()
        .zip(sources)
        .map(|(s, src)| SliceRun::new(&shared, s, src))
        .collect();
    let finished: Vec<Result<SliceRun<'_>, PipelineError>> = if options.parallel_slices {
        thread::scope(|scope| {
            let handles: Vec<_> = runs.into_iter().map(|r| scope.spawn(move || r.run())).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("slice thread panicked"))
                .collect()
        })
    } else {
        runs.into_iter().map(SliceRun::run).collect()
    };
    let finished: Vec<SliceRun<'_>> = finished.into_iter().collect::<Result<_, _>>()?;

    let mut store = ProvenanceStore::new();
    let mut bunits = Vec::new();
    let mut gates = Vec::new();
    let mut files = BTreeMap::new();
    let mut records = Vec::new();
    for s in &finished {
        let start = store.len();
        store.extend(&s.store);
        bunits.extend(s.bunits.iter().cloned());
        gates.extend(s.gates.iter().cloned().map(|mut g| {
            g.provenance_start = start;
            g
        }));
        files.extend(s.files.iter().map(|(k, v)| (k.clone(), v.clone())));
        records.push(SliceRecord {
            name: s.slice.name.clone(),
            final_graph: s.graph.graph_id(),
            provenance_start: start,
            provenance_len: s.store.len(),
            snapshots: s.snapshots.iter().map(|(k, v)| (k.clone(), v.id)).collect(),
            verifier: s.verifier.clone(),
        });
    }
    let completed = !finished.iter().any(|s| s.halted);

    let mut model_id = None;
    if completed {
        let mut model = ModelRun {
            shared: &shared,
            slices: &finished,
            store,
            model: None,
            bunits: Vec::new(),
            gates: Vec::new(),
            files: BTreeMap::new(),
        };
        model.run()?;
        bunits.extend(model.bunits);
        gates.extend(model.gates);
        files.extend(model.files);
        model_id = model.model.as_ref().map(|m| m.graph.graph_id());
        store = model.store;
    }

    for (rel, bytes) in &files {
        write_atomic(&workspace.root().join(rel), bytes)?;
    }
    let signatures: Vec<_> = gates.iter().flat_map(|g| g.signatures().cloned()).collect();
    let mut sig_json = serde_json::to_vec_pretty(&signatures).expect("signatures serialize");
    sig_json.push(b'\n');
    write_atomic(&workspace.reports_dir().join("signatures.json"), &sig_json)?;
    write_atomic(&workspace.provenance_path(), store.to_log().as_bytes())?;

    let report = RunReport {
        run_id: run,
        name: config.name.clone(),
        run_root: run_root(&bunits),
        completed,
        bunits,
        gates,
        slices: records,
        model: model_id,
    };
    workspace.write_report(&report)?;
    Ok(report)
}
