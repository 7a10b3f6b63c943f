use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::id::{content_id, ContentId};
use super::GraphError;

/// Closed set of node kinds in the unified graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ElementKind {
    Dataset,
    Table,
    Column,
    Row,
    Cell,
    Value,
    TypeNode,
    InstanceNode,
    RelationType,
    SeedCategory,
}

impl ElementKind {
    pub const ALL: [ElementKind; 10] = [
        ElementKind::Dataset,
        ElementKind::Table,
        ElementKind::Column,
        ElementKind::Row,
        ElementKind::Cell,
        ElementKind::Value,
        ElementKind::TypeNode,
        ElementKind::InstanceNode,
        ElementKind::RelationType,
        ElementKind::SeedCategory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Dataset => "Dataset",
            ElementKind::Table => "Table",
            ElementKind::Column => "Column",
            ElementKind::Row => "Row",
            ElementKind::Cell => "Cell",
            ElementKind::Value => "Value",
            ElementKind::TypeNode => "TypeNode",
            ElementKind::InstanceNode => "InstanceNode",
            ElementKind::RelationType => "RelationType",
            ElementKind::SeedCategory => "SeedCategory",
        }
    }

    pub fn generality(self) -> Generality {
        match self {
            ElementKind::Dataset | ElementKind::SeedCategory => Generality::Metadata,
            ElementKind::Table
            | ElementKind::Column
            | ElementKind::TypeNode
            | ElementKind::RelationType => Generality::Schema,
            ElementKind::Row | ElementKind::Cell | ElementKind::Value | ElementKind::InstanceNode => {
                Generality::Data
            }
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ElementKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ElementKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GraphError::UnknownKind(s.to_string()))
    }
}

/// Level of generality an element belongs to, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generality {
    Metadata,
    Schema,
    Data,
}

impl Generality {
    pub fn name(self) -> &'static str {
        match self {
            Generality::Metadata => "metadata",
            Generality::Schema => "schema",
            Generality::Data => "data",
        }
    }
}

/// A content-addressed node of the unified graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Element {
    pub id: ContentId,
    pub kind: ElementKind,
    pub parents: Vec<ContentId>,
    pub payload: String,
    /// Where the element came from. Not part of its identity.
    pub origin: String,
}

impl Element {
    pub fn new(kind: ElementKind, parents: Vec<ContentId>, payload: impl Into<String>, origin: impl Into<String>) -> Self {
        let payload = payload.into();
        let id = element_id(kind, &parents, &payload);
        Element {
            id,
            kind,
            parents,
            payload,
            origin: origin.into(),
        }
    }

    /// Recomputes the id from the canonical serialization.
    pub fn recompute_id(&self) -> ContentId {
        element_id(self.kind, &self.parents, &self.payload)
    }
}

/// A typed directed edge whose predicate is itself an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub id: ContentId,
    pub predicate: ContentId,
    pub subject: ContentId,
    pub object: ContentId,
}

impl Triple {
    pub fn new(predicate: ContentId, subject: ContentId, object: ContentId) -> Self {
        Triple {
            id: triple_id(predicate, subject, object),
            predicate,
            subject,
            object,
        }
    }
}

/// `v1|<kind>|<parent hexes joined by ,>|<payload>` as UTF-8 bytes.
pub fn canonical_serialize(kind: ElementKind, parents: &[ContentId], payload: &str) -> Vec<u8> {
    let mut out = String::with_capacity(8 + kind.name().len() + parents.len() * 65 + payload.len());
    out.push_str("v1|");
    out.push_str(kind.name());
    out.push('|');
    for (i, parent) in parents.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&parent.to_hex());
    }
    out.push('|');
    out.push_str(payload);
    out.into_bytes()
}

/// Byte-level entry point for payloads that have not been validated as UTF-8.
pub fn canonical_serialize_bytes(
    kind: ElementKind,
    parents: &[ContentId],
    payload: &[u8],
) -> Result<Vec<u8>, GraphError> {
    let text = std::str::from_utf8(payload).map_err(|e| GraphError::Encoding(e.to_string()))?;
    Ok(canonical_serialize(kind, parents, text))
}

pub fn element_id(kind: ElementKind, parents: &[ContentId], payload: &str) -> ContentId {
    content_id(&canonical_serialize(kind, parents, payload))
}

pub fn triple_id(predicate: ContentId, subject: ContentId, object: ContentId) -> ContentId {
    let text = format!("v1|Triple|{predicate},{subject},{object}|");
    content_id(text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference concatenator, written independently of `canonical_serialize`.
    fn reference(kind: &str, parents: &[&str], payload: &str) -> Vec<u8> {
        let mut bytes = b"v1|".to_vec();
        bytes.extend_from_slice(kind.as_bytes());
        bytes.push(b'|');
        bytes.extend_from_slice(parents.join(",").as_bytes());
        bytes.push(b'|');
        bytes.extend_from_slice(payload.as_bytes());
        bytes
    }

    #[test]
    fn empty_and_plain_value() {
        assert_eq!(canonical_serialize(ElementKind::Value, &[], ""), b"v1|Value||");
        assert_eq!(
            canonical_serialize(ElementKind::Value, &[], "100.00"),
            b"v1|Value||100.00"
        );
    }

    #[test]
    fn cell_matches_reference_concatenator() {
        let row = content_id(b"row");
        let col = content_id(b"col");
        let got = canonical_serialize(ElementKind::Cell, &[row, col], "Sales");
        let want = reference("Cell", &[&row.to_hex(), &col.to_hex()], "Sales");
        assert_eq!(got, want);
    }

    #[test]
    fn invalid_utf8_payload_is_an_encoding_error() {
        let err = canonical_serialize_bytes(ElementKind::Value, &[], &[0xff, 0xfe]).unwrap_err();
        assert!(matches!(err, GraphError::Encoding(_)));
    }

    #[test]
    fn pipe_in_payload_does_not_collide() {
        let a = element_id(ElementKind::Value, &[], "a|b");
        let b = element_id(ElementKind::Value, &[], "a");
        assert_ne!(a, b);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in ElementKind::ALL {
            assert_eq!(kind.name().parse::<ElementKind>().unwrap(), kind);
        }
        assert!("Widget".parse::<ElementKind>().is_err());
    }
}
