//! Load: surface computerization of snapshots into the unified graph.
//!
//! Every structural part gets a derived identity: the dataset from the
//! system name, tables and columns from their names under their container,
//! rows from their 0-based ordinal under the table, and cells from the row,
//! column and raw text. Load performs no normalization.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::collect::Snapshot;
use crate::graph::{reserved, ContentId, ElementKind, GraphError, UnifiedGraph};
use crate::pass::{ensure_relation, PassContext};
use crate::provenance::{EdgeKind, ProvenanceError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoadError {
    #[error("{source_name} is not valid UTF-8: {reason}")]
    Encoding { source_name: String, reason: String },
    #[error("record {record} has {found} fields, expected {expected}")]
    RaggedRow {
        record: usize,
        expected: usize,
        found: usize,
    },
    #[error("table spec: {0}")]
    BadSpec(String),
    #[error("CSV parse failure: {0}")]
    Csv(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Provenance(#[from] ProvenanceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Tsv,
    Delimited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Text,
    Decimal,
    Date,
}

impl ColumnType {
    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Text => "text",
            ColumnType::Decimal => "decimal",
            ColumnType::Date => "date",
        }
    }
}

/// How to read one table. Keys match the spec file's JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub name: String,
    pub format: TableFormat,
    #[serde(default)]
    pub delimiter: Option<String>,
    pub has_header: bool,
    #[serde(default)]
    pub columns: BTreeMap<String, ColumnType>,
}

impl TableSpec {
    pub fn from_json(text: &str) -> Result<Self, LoadError> {
        let spec: TableSpec =
            serde_json::from_str(text).map_err(|e| LoadError::BadSpec(e.to_string()))?;
        spec.delimiter_byte()?;
        Ok(spec)
    }

    pub fn delimiter_byte(&self) -> Result<u8, LoadError> {
        match (self.format, self.delimiter.as_deref()) {
            (TableFormat::Csv, None) => Ok(b','),
            (TableFormat::Tsv, None) => Ok(b'\t'),
            (TableFormat::Delimited, None) => Err(LoadError::BadSpec(
                "delimited format needs a delimiter".into(),
            )),
            (_, Some(d)) if d.len() == 1 => Ok(d.as_bytes()[0]),
            (_, Some(d)) => Err(LoadError::BadSpec(format!(
                "delimiter {d:?} is not a single byte"
            ))),
        }
    }
}

/// Ids of everything a load created.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedSource {
    pub system: String,
    pub dataset: ContentId,
    pub table: ContentId,
    pub columns: Vec<ContentId>,
    pub rows: Vec<ContentId>,
    /// Row-major: `cells[row][column]`.
    pub cells: Vec<Vec<ContentId>>,
}

impl LoadedSource {
    pub fn cell_count(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }
}

pub fn dataset_id(system: &str) -> ContentId {
    crate::graph::element_id(ElementKind::Dataset, &[], system)
}

pub fn table_id(system: &str, table: &str) -> ContentId {
    crate::graph::element_id(ElementKind::Table, &[dataset_id(system)], table)
}

pub fn column_id(system: &str, table: &str, column: &str) -> ContentId {
    crate::graph::element_id(ElementKind::Column, &[table_id(system, table)], column)
}

fn decode<'a>(bytes: &'a [u8], snapshot: &Snapshot) -> Result<&'a str, LoadError> {
    std::str::from_utf8(bytes).map_err(|e| LoadError::Encoding {
        source_name: snapshot.source.clone(),
        reason: e.to_string(),
    })
}

/// Parses a header/quoted table and folds it into `graph`.
pub fn load_table(
    graph: &mut UnifiedGraph,
    ctx: &mut PassContext<'_>,
    snapshot: &Snapshot,
    bytes: &[u8],
    spec: &TableSpec,
    system: &str,
) -> Result<LoadedSource, LoadError> {
    let text = decode(bytes, snapshot)?;
    let delimiter = spec.delimiter_byte()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| LoadError::Csv(e.to_string()))?;
        records.push(record.iter().map(str::to_string).collect::<Vec<_>>());
    }

    let (header, body_start) = match (spec.has_header, records.first()) {
        (true, Some(h)) => (h.clone(), 1),
        (true, None) => (Vec::new(), 0),
        (false, first) => (
            (0..first.map_or(0, Vec::len)).map(|i| format!("c{i}")).collect(),
            0,
        ),
    };
    for (record, fields) in records.iter().enumerate().skip(body_start) {
        if fields.len() != header.len() {
            return Err(LoadError::RaggedRow {
                record,
                expected: header.len(),
                found: fields.len(),
            });
        }
    }
    if let Some(unknown) = spec.columns.keys().find(|c| !header.contains(c)) {
        return Err(LoadError::BadSpec(format!(
            "typed column {unknown:?} is not in the header of {}",
            spec.name
        )));
    }
    let body: Vec<Vec<String>> = records.into_iter().skip(body_start).collect();
    build(graph, ctx, snapshot, system, &spec.name, &header, &body, &spec.columns, "load_table")
}

/// Loads plain delimited text as a headerless table with columns `c0..cN`.
/// Short lines are padded with empty cells, each padding traced.
pub fn load_delimited_text(
    graph: &mut UnifiedGraph,
    ctx: &mut PassContext<'_>,
    snapshot: &Snapshot,
    bytes: &[u8],
    delimiter: u8,
    table: &str,
    system: &str,
) -> Result<LoadedSource, LoadError> {
    let text = decode(bytes, snapshot)?;
    let delimiter = char::from(delimiter);
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    let body: Vec<Vec<String>> = lines
        .iter()
        .map(|l| {
            l.strip_suffix('\r')
                .unwrap_or(l)
                .split(delimiter)
                .map(str::to_string)
                .collect()
        })
        .collect();
    let width = body.iter().map(Vec::len).max().unwrap_or(0);
    let header: Vec<String> = (0..width).map(|i| format!("c{i}")).collect();
    let widths: Vec<usize> = body.iter().map(Vec::len).collect();
    let padded: Vec<Vec<String>> = body
        .into_iter()
        .map(|mut r| {
            r.resize(width, String::new());
            r
        })
        .collect();
    let loaded = build(
        graph,
        ctx,
        snapshot,
        system,
        table,
        &header,
        &padded,
        &BTreeMap::new(),
        "load_delimited_text",
    )?;
    for (row, original) in widths.iter().enumerate() {
        if *original < width {
            let pads = loaded.cells[row][*original..].to_vec();
            ctx.trace_step("pad", vec![loaded.rows[row]], pads, EdgeKind::Derived)?;
        }
    }
    Ok(loaded)
}

#[allow(clippy::too_many_arguments)]
fn build(
    graph: &mut UnifiedGraph,
    ctx: &mut PassContext<'_>,
    snapshot: &Snapshot,
    system: &str,
    table_name: &str,
    header: &[String],
    body: &[Vec<String>],
    typing: &BTreeMap<String, ColumnType>,
    origin_step: &str,
) -> Result<LoadedSource, LoadError> {
    let origin = format!("{origin_step}:{system}:{}", snapshot.source);
    let mut created = BTreeSet::new();
    let dataset = graph.add_element(ElementKind::Dataset, vec![], system, &origin)?;
    let table = graph.add_element(ElementKind::Table, vec![dataset], table_name, &origin)?;
    created.extend([dataset, table]);

    let mut columns = Vec::with_capacity(header.len());
    for name in header {
        let col = graph.add_element(ElementKind::Column, vec![table], name.as_str(), &origin)?;
        columns.push(col);
        created.insert(col);
    }
    if !typing.is_empty() {
        let rel = ensure_relation::<LoadError>(graph, ctx, reserved::DATATYPE)?;
        for (name, ty) in typing {
            let col = columns[header.iter().position(|h| h == name).expect("checked above")];
            let value = graph.add_element(ElementKind::Value, vec![], ty.name(), &origin)?;
            created.insert(value);
            graph.add_triple(rel, col, value)?;
        }
    }

    let mut rows = Vec::with_capacity(body.len());
    let mut cells = Vec::with_capacity(body.len());
    for (ordinal, fields) in body.iter().enumerate() {
        let row = graph.add_element(ElementKind::Row, vec![table], ordinal.to_string(), &origin)?;
        created.insert(row);
        let mut row_cells = Vec::with_capacity(fields.len());
        for (field, col) in fields.iter().zip(&columns) {
            let cell = graph.add_element(ElementKind::Cell, vec![row, *col], field.as_str(), &origin)?;
            created.insert(cell);
            row_cells.push(cell);
        }
        rows.push(row);
        cells.push(row_cells);
    }

    let mut chunk_ids: Vec<ContentId> = snapshot.chunk_ids().collect();
    chunk_ids.sort();
    chunk_ids.dedup();
    ctx.trace(chunk_ids, created.into_iter().collect(), EdgeKind::Derived)?;

    Ok(LoadedSource {
        system: system.to_string(),
        dataset,
        table,
        columns,
        rows,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::content_id;
    use crate::provenance::{ProvenanceStore, RunId};

    fn spec(name: &str) -> TableSpec {
        TableSpec {
            name: name.into(),
            format: TableFormat::Csv,
            delimiter: None,
            has_header: true,
            columns: BTreeMap::new(),
        }
    }

    fn load(bytes: &[u8], spec: &TableSpec) -> Result<(UnifiedGraph, LoadedSource, ProvenanceStore), LoadError> {
        let mut g = UnifiedGraph::new();
        let mut store = ProvenanceStore::new();
        let snap = Snapshot::compute(bytes, "mem", 4).unwrap();
        let mut ctx = PassContext::new(&mut store, RunId(content_id(b"run")), "load_table");
        let loaded = load_table(&mut g, &mut ctx, &snap, bytes, spec, "AAS")?;
        Ok((g, loaded, store))
    }

    #[test]
    fn simple_csv_counts() {
        let (g, l, _) = load(b"a,b\n1,2\n", &spec("t")).unwrap();
        assert_eq!(l.columns.len(), 2);
        assert_eq!(l.rows.len(), 1);
        assert_eq!(l.cell_count(), 2);
        assert_eq!(g.active_of_kind(ElementKind::Table).count(), 1);
        for row in &l.cells {
            for cell in row {
                assert_eq!(g.element(cell).unwrap().parents.len(), 2);
            }
        }
        assert_eq!(l.table, table_id("AAS", "t"));
        assert_eq!(l.columns[1], column_id("AAS", "t", "b"));
    }

    #[test]
    fn loading_twice_gives_identical_ids() {
        let (g1, l1, _) = load(b"a,b\n1,2\n", &spec("t")).unwrap();
        let (g2, l2, _) = load(b"a,b\n1,2\n", &spec("t")).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(g1, g2);
    }

    #[test]
    fn duplicate_rows_do_not_collide() {
        let (_, l, _) = load(b"a\nx\nx\n", &spec("t")).unwrap();
        assert_ne!(l.rows[0], l.rows[1]);
        assert_ne!(l.cells[0][0], l.cells[1][0]);
    }

    #[test]
    fn ragged_row_reports_record_position() {
        let err = load(b"a,b\n1,2,3\n", &spec("t")).unwrap_err();
        assert_eq!(
            err,
            LoadError::RaggedRow {
                record: 1,
                expected: 2,
                found: 3
            }
        );
    }

    #[test]
    fn quoted_fields_follow_rfc4180() {
        let (g, l, _) = load(b"a,b\n\"x, y\",\"he said \"\"hi\"\"\"\n", &spec("t")).unwrap();
        assert_eq!(g.element(&l.cells[0][0]).unwrap().payload, "x, y");
        assert_eq!(g.element(&l.cells[0][1]).unwrap().payload, "he said \"hi\"");
    }

    #[test]
    fn invalid_utf8_is_an_encoding_error() {
        assert!(matches!(
            load(b"a\n\xff\n", &spec("t")),
            Err(LoadError::Encoding { .. })
        ));
    }

    #[test]
    fn every_element_traces_to_a_chunk() {
        let mut s = spec("t");
        s.columns.insert("b".into(), ColumnType::Decimal);
        let (g, _, store) = load(b"a,b\n1,2.50\n", &s).unwrap();
        let snap = Snapshot::compute(b"a,b\n1,2.50\n", "mem", 4).unwrap();
        let roots = snap.chunk_ids().collect();
        assert!(store.unreached_elements(&g, &roots).is_empty());
    }

    #[test]
    fn spec_json_keys_and_delimiter_validation() {
        let s = TableSpec::from_json(
            r#"{"name":"p","format":"delimited","delimiter":";","has_header":true,"columns":{"amount":"decimal"}}"#,
        )
        .unwrap();
        assert_eq!(s.delimiter_byte().unwrap(), b';');
        assert!(TableSpec::from_json(r#"{"name":"p","format":"delimited","delimiter":";;","has_header":true}"#).is_err());
        assert!(TableSpec::from_json(r#"{"name":"p","format":"csv","has_header":true,"extra":1}"#).is_err());
    }

    fn load_text(bytes: &[u8], delim: u8) -> (UnifiedGraph, LoadedSource, ProvenanceStore) {
        let mut g = UnifiedGraph::new();
        let mut store = ProvenanceStore::new();
        let snap = Snapshot::compute(bytes, "mem", 64).unwrap();
        let mut ctx = PassContext::new(&mut store, RunId(content_id(b"run")), "load_delimited_text");
        let l = load_delimited_text(&mut g, &mut ctx, &snap, bytes, delim, "t", "ZAS").unwrap();
        (g, l, store)
    }

    #[test]
    fn delimited_text_synthetic_columns() {
        let (g, l, _) = load_text(b"x|y\n", b'|');
        assert_eq!(l.rows.len(), 1);
        let names: Vec<_> = l.columns.iter().map(|c| g.element(c).unwrap().payload.clone()).collect();
        assert_eq!(names, vec!["c0", "c1"]);
        let (_, empty, _) = load_text(b"", b'|');
        assert!(empty.rows.is_empty());
    }

    /// Reference line splitter: widest line wins, short lines padded.
    fn reference_split(text: &str, delim: char) -> Vec<Vec<String>> {
        let lines: Vec<&str> = text.lines().collect();
        let width = lines.iter().map(|l| l.split(delim).count()).max().unwrap_or(0);
        lines
            .iter()
            .map(|l| {
                let mut f: Vec<String> = l.split(delim).map(String::from).collect();
                while f.len() < width {
                    f.push(String::new());
                }
                f
            })
            .collect()
    }

    #[test]
    fn mixed_width_lines_are_padded_and_traced() {
        let text = "a|b|c\nd\ne|f\n";
        let (g, l, store) = load_text(text.as_bytes(), b'|');
        let got: Vec<Vec<String>> = l
            .cells
            .iter()
            .map(|r| r.iter().map(|c| g.element(c).unwrap().payload.clone()).collect())
            .collect();
        assert_eq!(got, reference_split(text, '|'));
        let pads: Vec<_> = store
            .edges()
            .iter()
            .filter(|e| e.transform.ends_with(":pad"))
            .collect();
        assert_eq!(pads.len(), 2);
        assert_eq!(pads[0].targets.len(), 2);
        assert_eq!(pads[1].targets.len(), 1);
    }
}
