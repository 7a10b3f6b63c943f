//! Deep computerization passes. Each pass takes a graph by reference and
//! returns its successor; the input is never modified.

mod clean;
mod fk;
mod integrate;
mod unify;

pub use clean::{clean_pass, clean_text, CleanChange, CleanKind, CleanReport};
pub use fk::{infer_foreign_keys, FkCandidate, FkParams, FkReport};
pub use integrate::{
    integrate_sources, rewrite_recoded_queries, IntegrationMapping, IntegrationReport, Recoding,
    Rename,
};
pub use unify::{unify_types, UnifyReport};

use crate::graph::{ContentId, GraphError};
use crate::provenance::ProvenanceError;
use crate::verify::VerifyError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvolveError {
    #[error("recoding of {column} is not one-to-one: {values:?} collide")]
    NonBijectiveRecoding { column: String, values: Vec<String> },
    #[error("mapping names {0}, which is not in the graph")]
    DanglingReference(String),
    #[error("mapping file: {0}")]
    BadMapping(String),
    #[error("element {0} missing")]
    MissingElement(ContentId),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Provenance(#[from] ProvenanceError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}
