use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::collect::SnapshotStore;
use crate::graph::{ContentId, UnifiedGraph};
use crate::provenance::{ProvenanceStore, RunId};

use super::{PipelineError, RunReport};

pub const LOCK_FILE: &str = ".lock";
pub const LATEST: &str = "latest";

/// On-disk layout: `snapshots/`, `graphs/`, `provenance.log`, `reports/`
/// and `runs/<runHex>/report.json`.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

fn io_failure(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a temporary sibling so readers never see partial files.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_failure(dir))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().map(|e| e.to_string_lossy()).unwrap_or_default()
    ));
    fs::write(&tmp, bytes).map_err(io_failure(&tmp))?;
    fs::rename(&tmp, path).map_err(io_failure(path))
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn snapshots(&self) -> SnapshotStore {
        SnapshotStore::new(self.root.join("snapshots"))
    }

    pub fn graph_path(&self, id: &ContentId) -> PathBuf {
        self.root.join("graphs").join(format!("{id}.json"))
    }

    pub fn provenance_path(&self) -> PathBuf {
        self.root.join("provenance.log")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn run_dir(&self, run: &RunId) -> PathBuf {
        self.root.join("runs").join(run.to_string())
    }

    /// Takes the advisory lock; it is released when the guard drops.
    pub fn lock(&self) -> Result<WorkspaceLock, PipelineError> {
        fs::create_dir_all(&self.root).map_err(io_failure(&self.root))?;
        let path = self.root.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WorkspaceLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(path)),
            Err(e) => Err(io_failure(&path)(e)),
        }
    }

    pub fn write_graph(&self, graph: &UnifiedGraph) -> Result<ContentId, PipelineError> {
        let id = graph.graph_id();
        let path = self.graph_path(&id);
        if !path.exists() {
            let bytes = serde_json::to_vec(&graph.to_document()).expect("graph serializes");
            write_atomic(&path, &bytes)?;
        }
        Ok(id)
    }

    pub fn read_graph(&self, id: &ContentId) -> Result<UnifiedGraph, PipelineError> {
        let path = self.graph_path(id);
        let bytes = fs::read(&path).map_err(io_failure(&path))?;
        let doc = serde_json::from_slice(&bytes).map_err(|e| PipelineError::Corrupt {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let graph = UnifiedGraph::from_document(doc).map_err(|e| PipelineError::Corrupt {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if graph.graph_id() != *id {
            return Err(PipelineError::Corrupt {
                path,
                reason: format!("content hashes to {}", graph.graph_id()),
            });
        }
        Ok(graph)
    }

    pub fn read_provenance(&self) -> Result<ProvenanceStore, PipelineError> {
        let path = self.provenance_path();
        let text = fs::read_to_string(&path).map_err(io_failure(&path))?;
        ProvenanceStore::from_log(&text).map_err(|e| PipelineError::Corrupt {
            path,
            reason: e.to_string(),
        })
    }

    /// The report of the most recent completed or halted run, if any.
    pub fn latest_report(&self) -> Result<Option<RunReport>, PipelineError> {
        let latest = self.root.join("runs").join(LATEST);
        let hex = match fs::read_to_string(&latest) {
            Ok(t) => t.trim().to_string(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_failure(&latest)(e)),
        };
        let path = self.root.join("runs").join(hex).join("report.json");
        let bytes = fs::read(&path).map_err(io_failure(&path))?;
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| PipelineError::Corrupt {
                path,
                reason: e.to_string(),
            })
    }

    pub(crate) fn write_report(&self, report: &RunReport) -> Result<(), PipelineError> {
        let dir = self.run_dir(&report.run_id);
        let mut json = serde_json::to_vec_pretty(report).expect("report serializes");
        json.push(b'\n');
        write_atomic(&dir.join("report.json"), &json)?;
        write_atomic(
            &self.root.join("runs").join(LATEST),
            format!("{}\n", report.run_id).as_bytes(),
        )
    }
}

#[derive(Debug)]
pub struct WorkspaceLock {
    path: PathBuf,
}

impl Drop for WorkspaceLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ElementKind;

    #[test]
    fn lock_is_exclusive_until_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path());
        let guard = ws.lock().unwrap();
        assert!(matches!(ws.lock(), Err(PipelineError::Locked(_))));
        drop(guard);
        assert!(ws.lock().is_ok());
    }

    #[test]
    fn graphs_round_trip_and_tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path());
        let mut g = UnifiedGraph::new();
        g.add_element(ElementKind::TypeNode, vec![], "A", "t").unwrap();
        let id = ws.write_graph(&g).unwrap();
        assert_eq!(ws.read_graph(&id).unwrap(), g);

        let mut other = UnifiedGraph::new();
        other.add_element(ElementKind::TypeNode, vec![], "B", "t").unwrap();
        let bytes = serde_json::to_vec(&other.to_document()).unwrap();
        fs::write(ws.graph_path(&id), bytes).unwrap();
        assert!(matches!(ws.read_graph(&id), Err(PipelineError::Corrupt { .. })));
    }
}
