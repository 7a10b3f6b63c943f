//! Export of a model back into files other systems can read.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::collect::Snapshot;
use crate::evolve::{unify_types, EvolveError};
use crate::graph::{ContentId, DotFilter, ElementKind, UnifiedGraph};
use crate::load::{load_table, ColumnType, LoadError, TableFormat, TableSpec};
use crate::pass::PassContext;
use crate::provenance::ProvenanceStore;
use crate::verify::{is_decimal, Records};

#[derive(Debug, thiserror::Error)]
pub enum ReuseError {
    #[error("I/O failure on {path}: {source}")]
    IoFailure { path: PathBuf, source: io::Error },
    #[error("CSV encoding: {0}")]
    Csv(String),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportFormat {
    CsvTables,
    Triples,
    Dot,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv-tables" => Ok(ExportFormat::CsvTables),
            "triples" => Ok(ExportFormat::Triples),
            "dot" => Ok(ExportFormat::Dot),
            other => Err(format!("unknown export format {other:?}")),
        }
    }
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| if matches!(c, '/' | '\\' | '\0') { '_' } else { c })
        .collect()
}

/// One exported table: system, type label, attribute labels and rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportedTable {
    pub system: String,
    pub label: String,
    pub type_id: ContentId,
    pub header: Vec<String>,
    pub decimal: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ExportedTable {
    pub fn path(&self) -> PathBuf {
        PathBuf::from(file_safe(&self.system)).join(format!("{}.csv", file_safe(&self.label)))
    }

    pub fn to_csv(&self) -> Result<String, ReuseError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let csv_err = |e: csv::Error| ReuseError::Csv(e.to_string());
        w.write_record(&self.header).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| ReuseError::Csv(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields is UTF-8"))
    }
}

/// A table per active type: attribute columns sorted by label, instances
/// sorted by id.
pub fn csv_tables(graph: &UnifiedGraph) -> Vec<ExportedTable> {
    let mut out = Vec::new();
    for ty in graph.active_of_kind(ElementKind::TypeNode) {
        let records = Records::of(graph, ty.id).expect("active type");
        let attrs = records.attributes();
        let system = ty
            .parents
            .first()
            .and_then(|p| graph.element(p))
            .map(|d| d.payload.clone())
            .unwrap_or_else(|| "_".to_string());
        let rows = records
            .items
            .iter()
            .map(|i| {
                attrs
                    .values()
                    .map(|a| records.value(*i, *a).unwrap_or("").to_string())
                    .collect()
            })
            .collect();
        out.push(ExportedTable {
            system,
            label: ty.payload.clone(),
            type_id: ty.id,
            header: attrs.keys().cloned().collect(),
            decimal: attrs
                .iter()
                .filter(|(_, id)| is_decimal(graph, **id))
                .map(|(l, _)| l.clone())
                .collect(),
            rows,
        });
    }
    out.sort_by(|a, b| a.path().cmp(&b.path()));
    out
}

/// Writes the export under `destination` and returns the written paths.
pub fn reuse_export(
    graph: &UnifiedGraph,
    format: ExportFormat,
    destination: &Path,
) -> Result<Vec<PathBuf>, ReuseError> {
    let write = |rel: PathBuf, text: &str| -> Result<PathBuf, ReuseError> {
        let path = destination.join(rel);
        let io = |source| ReuseError::IoFailure {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        fs::write(&path, text).map_err(io)?;
        Ok(path)
    };
    match format {
        ExportFormat::CsvTables => csv_tables(graph)
            .iter()
            .map(|t| write(t.path(), &t.to_csv()?))
            .collect(),
        ExportFormat::Triples => Ok(vec![write("model.triples".into(), &graph.export_triples())?]),
        ExportFormat::Dot => Ok(vec![write("model.dot".into(), &graph.export_dot(&DotFilter::active()))?]),
    }
}

/// Attribute rows of every type: type → sorted list of attribute → value
/// maps. Instance ids are left out, so graphs that differ only in how their
/// instances were named compare equal.
pub fn instance_attribute_rows(graph: &UnifiedGraph) -> BTreeMap<ContentId, Vec<BTreeMap<ContentId, ContentId>>> {
    let mut out = BTreeMap::new();
    for ty in graph.active_of_kind(ElementKind::TypeNode) {
        let records = Records::of(graph, ty.id).expect("active type");
        let attrs = records.attributes();
        let mut rows: Vec<BTreeMap<ContentId, ContentId>> = records
            .items
            .iter()
            .map(|i| {
                graph
                    .triples_with_subject(*i)
                    .filter(|t| attrs.values().any(|a| *a == t.predicate))
                    .map(|t| (t.predicate, t.object))
                    .collect()
            })
            .collect();
        rows.sort();
        out.insert(ty.id, rows);
    }
    out
}

/// Loads exported tables back and unifies them.
pub fn reload_tables(tables: &[ExportedTable], ctx: &mut PassContext<'_>) -> Result<UnifiedGraph, ReuseError> {
    let mut g = UnifiedGraph::new();
    for t in tables {
        let text = t.to_csv()?;
        let source = t.path().to_string_lossy().into_owned();
        let snapshot = Snapshot::compute(text.as_bytes(), &source, crate::collect::DEFAULT_CHUNK_SIZE)
            .expect("non-zero chunk size");
        let spec = TableSpec {
            name: t.label.clone(),
            format: TableFormat::Csv,
            delimiter: None,
            has_header: true,
            columns: t
                .decimal
                .iter()
                .map(|c| (c.clone(), ColumnType::Decimal))
                .collect(),
        };
        load_table(&mut g, ctx, &snapshot, text.as_bytes(), &spec, &t.system)?;
    }
    Ok(unify_types(&g, ctx)?.0)
}

/// Export, reload and unify, then compare attribute rows per exported type.
pub fn round_trip_matches(graph: &UnifiedGraph, ctx: &mut PassContext<'_>) -> Result<bool, ReuseError> {
    let tables = csv_tables(graph);
    let reloaded = reload_tables(&tables, ctx)?;
    let (a, b) = (instance_attribute_rows(graph), instance_attribute_rows(&reloaded));
    Ok(tables.iter().all(|t| a.get(&t.type_id) == b.get(&t.type_id)))
}

/// Round trip with a scratch provenance store.
pub fn round_trip_check(graph: &UnifiedGraph, run: crate::provenance::RunId) -> Result<bool, ReuseError> {
    let mut store = ProvenanceStore::new();
    let mut ctx = PassContext::new(&mut store, run, "round_trip");
    round_trip_matches(graph, &mut ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::content_id;
    use crate::provenance::RunId;

    fn model() -> UnifiedGraph {
        let csv = "b,a\n\"x, y\",1.25\nz,2.00\n";
        let mut store = ProvenanceStore::new();
        let mut ctx = PassContext::new(&mut store, RunId(content_id(b"r")), "t");
        let mut g = UnifiedGraph::new();
        let spec = TableSpec {
            name: "Account".into(),
            format: TableFormat::Csv,
            delimiter: None,
            has_header: true,
            columns: BTreeMap::from([("a".into(), ColumnType::Decimal)]),
        };
        let snap = Snapshot::compute(csv.as_bytes(), "m", 64).unwrap();
        load_table(&mut g, &mut ctx, &snap, csv.as_bytes(), &spec, "AAS").unwrap();
        unify_types(&g, &mut ctx).unwrap().0
    }

    #[test]
    fn csv_columns_sorted_and_quoted() {
        let tables = csv_tables(&model());
        assert_eq!(tables.len(), 1);
        assert_eq!(tables[0].path(), PathBuf::from("AAS/Account.csv"));
        assert_eq!(tables[0].header, vec!["a", "b"]);
        assert_eq!(tables[0].decimal, vec!["a"]);
        let text = tables[0].to_csv().unwrap();
        assert!(text.starts_with("a,b\n"));
        assert!(text.contains("1.25,\"x, y\"\n"));
    }

    #[test]
    fn export_is_byte_deterministic_and_empty_triples_are_empty() {
        let dir = tempfile::tempdir().unwrap();
        let g = model();
        let p1 = reuse_export(&g, ExportFormat::CsvTables, &dir.path().join("1")).unwrap();
        let p2 = reuse_export(&g, ExportFormat::CsvTables, &dir.path().join("2")).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
        }
        let t = reuse_export(&UnifiedGraph::new(), ExportFormat::Triples, dir.path()).unwrap();
        assert_eq!(fs::read(&t[0]).unwrap(), b"");
    }

    #[test]
    fn round_trip_reproduces_attribute_rows() {
        assert!(round_trip_check(&model(), RunId(content_id(b"r"))).unwrap());
    }
}
