//! Pipeline orchestration: slices run collect, load and evolve stages
//! independently, then assimilate and reuse stages act on the merged model.
//! Gates inspect graphs between stages without changing them.

mod config;
mod gate;
mod run;
mod workspace;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub use config::{
    validate_config, BUnitConfig, BUnitRegistry, ConfigError, ConfigErrors, CustomPass, GateAction, GateConfig,
    PipelineConfig, SliceConfig, StageConfig, StageType, TableEntry,
};
pub use gate::{check_reports, run_gate, ActionOutcome, GateOutcome, ReportFailure};
pub use run::{run_pipeline, run_root, BUnitReport, RunOptions, RunReport, SliceRecord};
pub use workspace::{Workspace, WorkspaceLock};

use crate::assimilate::AssimilateError;
use crate::collect::{CollectError, Verification};
use crate::evolve::EvolveError;
use crate::graph::GraphError;
use crate::load::LoadError;
use crate::onto::OntoError;
use crate::provenance::{ProvenanceError, ProvenanceStore};
use crate::reuse::ReuseError;
use crate::verify::{VerifierContext, VerifyError};

#[derive(Debug, thiserror::Error)]
pub enum BUnitError {
    #[error(transparent)]
    Collect(#[from] CollectError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Onto(#[from] OntoError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Assimilate(#[from] AssimilateError),
    #[error(transparent)]
    Reuse(#[from] ReuseError),
    #[error(transparent)]
    Provenance(#[from] ProvenanceError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("parameter file {path}: {reason}")]
    Parameter { path: PathBuf, reason: String },
    #[error("source {0} was not collected in this slice")]
    NotCollected(String),
    #[error("graph changed but no trace edge was recorded")]
    Untraced,
    #[error("{0}")]
    Custom(String),
}

impl BUnitError {
    /// Problems with the run's inputs rather than with the data.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            BUnitError::Parameter { .. }
                | BUnitError::NotCollected(_)
                | BUnitError::Collect(CollectError::IoFailure { .. })
                | BUnitError::Reuse(ReuseError::IoFailure { .. })
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(ConfigErrors),
    #[error("I/O failure on {path}: {source}")]
    IoFailure { path: PathBuf, source: io::Error },
    #[error("slice {slice}: no source file matches {pattern}")]
    MissingSource { slice: String, pattern: String },
    #[error("slice {slice}: bad source pattern {pattern}: {reason}")]
    BadPattern {
        slice: String,
        pattern: String,
        reason: String,
    },
    #[error("workspace is locked ({0}); remove the file if no other command is running")]
    Locked(PathBuf),
    #[error("{path} is corrupt: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("workspace {0} holds no completed run")]
    EmptyWorkspace(PathBuf),
    #[error("the last run has no gate {0}")]
    NoSuchGate(usize),
    #[error("slice {slice}, stage {stage}, bUnit {bunit} ({kind}): {source}")]
    BUnit {
        slice: String,
        stage: usize,
        bunit: usize,
        kind: String,
        source: BUnitError,
    },
}

/// Reads and validates a config file; relative paths in it resolve against
/// the file's directory.
pub fn load_config(path: &Path, registry: &BUnitRegistry) -> Result<PipelineConfig, PipelineError> {
    let text = fs::read_to_string(path).map_err(|source| PipelineError::IoFailure {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config = validate_config(&text, registry).map_err(PipelineError::Config)?;
    config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateRecheck {
    pub name: String,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkspaceCheck {
    pub snapshots: usize,
    /// One line per bad chunk, naming its file.
    pub chunk_failures: Vec<String>,
    pub gates: Vec<GateRecheck>,
}

impl WorkspaceCheck {
    pub fn passed(&self) -> bool {
        self.chunk_failures.is_empty() && self.gates.iter().all(|g| g.failures.is_empty())
    }
}

fn store_slice(log: &str, start: usize, len: usize) -> Result<ProvenanceStore, ProvenanceError> {
    let lines: Vec<&str> = log.lines().skip(start).take(len).collect();
    let mut text = lines.join("\n");
    text.push('\n');
    if lines.is_empty() {
        text.clear();
    }
    ProvenanceStore::from_log(&text)
}

/// Re-hashes every stored snapshot and re-runs the report checks of the
/// last run's gates (all of them, or only `gate`).
pub fn verify_workspace(ws: &Workspace, gate: Option<usize>) -> Result<WorkspaceCheck, PipelineError> {
    let report = ws
        .latest_report()?
        .ok_or_else(|| PipelineError::EmptyWorkspace(ws.root().to_path_buf()))?;
    let snapshots = ws.snapshots();
    let ids = snapshots.list().map_err(|e| PipelineError::Corrupt {
        path: snapshots.root().to_path_buf(),
        reason: e.to_string(),
    })?;
    if ids.is_empty() {
        return Err(PipelineError::EmptyWorkspace(ws.root().to_path_buf()));
    }
    let mut chunk_failures = Vec::new();
    for id in &ids {
        let checked = snapshots
            .manifest(id)
            .and_then(|m| snapshots.verify_snapshot(&m));
        match checked {
            Ok(Verification::Pass) => {}
            Ok(Verification::Fail(list)) => {
                for f in list {
                    chunk_failures.push(format!(
                        "snapshot {id}: chunk {} ({}) hashes to {}, manifest says {}",
                        f.index,
                        f.path.display(),
                        f.actual,
                        f.expected
                    ));
                }
            }
            Err(e) => chunk_failures.push(format!("snapshot {id}: {e}")),
        }
    }

    if let Some(n) = gate {
        if !report.gates.iter().any(|g| g.gate == Some(n)) {
            return Err(PipelineError::NoSuchGate(n));
        }
    }
    let log_path = ws.provenance_path();
    let log = fs::read_to_string(&log_path).map_err(|source| PipelineError::IoFailure {
        path: log_path.clone(),
        source,
    })?;
    let mut gates = Vec::new();
    for g in report.gates.iter().filter(|g| gate.is_none() || g.gate == gate) {
        if g.verifiers.is_empty() {
            continue;
        }
        let mut failures = Vec::new();
        let store = store_slice(&log, g.provenance_start, g.provenance_len).map_err(|e| PipelineError::Corrupt {
            path: log_path.clone(),
            reason: e.to_string(),
        })?;
        match ws.read_graph(&g.graph) {
            Ok(graph) => {
                let verifiers: Vec<&VerifierContext> = g.verifiers.iter().collect();
                let now = check_reports(&graph, &store, &verifiers, &g.label);
                failures.extend(now.failures());
                let recorded: Vec<_> = g.signatures().collect();
                let ActionOutcome::ReportCheck { signatures, .. } = &now else {
                    unreachable!("check_reports returns a report check")
                };
                for s in signatures {
                    if !recorded.contains(&s) {
                        failures.push(format!("signature of query {} differs from the recorded run", s.query));
                    }
                }
            }
            Err(e) => failures.push(e.to_string()),
        }
        gates.push(GateRecheck {
            name: g.name(),
            failures,
        });
    }
    Ok(WorkspaceCheck {
        snapshots: ids.len(),
        chunk_failures,
        gates,
    })
}
