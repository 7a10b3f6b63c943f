//! Ontologization passes over unified graphs.

mod definitions;
mod dere;
mod merge;
mod seed;

pub use definitions::{article, export_definitions, extract_definitions};
pub use dere::{dere_transform, rewrite_dere_queries, DereReport, DereType};
pub use merge::{identity_merge, is_merged, matches, IdentityCriterion, MergeResult, Mirror};
pub use seed::{apply_seed, categories_of, is_seeded, SeedReport};

use crate::graph::{ContentId, GraphError};
use crate::provenance::ProvenanceError;
use crate::verify::VerifyError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OntoError {
    #[error("graph is already seeded")]
    AlreadySeeded,
    #[error("graph is not seeded")]
    NotSeeded,
    #[error("{} items match one another; the criterion is pairwise", items.len())]
    OverloadedMatch { items: Vec<ContentId> },
    #[error("matched items {a} and {b} disagree on attribute {attribute}")]
    ConflictingAttributes {
        a: ContentId,
        b: ContentId,
        attribute: ContentId,
    },
    #[error("intercompany item {item} has no merge partner")]
    MissingMerge { item: ContentId },
    #[error("type {type_id} has no {label} attribute")]
    MissingAttribute { type_id: ContentId, label: String },
    #[error("item {item} has debit/credit mark {value:?}")]
    UnknownMark { item: ContentId, value: String },
    #[error("type {0} does not belong to exactly one company")]
    AmbiguousCompany(ContentId),
    #[error("criterion file: {0}")]
    BadCriterion(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Provenance(#[from] ProvenanceError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}
