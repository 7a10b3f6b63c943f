//! Well-known elements whose ids are fixed by their payloads.
//!
//! Relation predicates are ordinary `RelationType` elements; the reserved
//! ones are hashed like any other element from the payloads below.

use std::sync::LazyLock;

use super::element::{element_id, ElementKind};
use super::id::ContentId;

pub const INDIVIDUAL: &str = "boro:Individual";
pub const TYPE: &str = "boro:Type";
pub const TUPLE: &str = "boro:Tuple";

pub const INSTANCE_OF: &str = "boro:instanceOf";
pub const SUBTYPE_OF: &str = "boro:subtypeOf";
pub const WHOLE_PART: &str = "boro:wholePart";
pub const DEBIT_REL: &str = "boro:debitRel";
pub const CREDIT_REL: &str = "boro:creditRel";

/// Engine relations outside the seed.
pub const FOREIGN_KEY: &str = "bclearer:foreignKey";
pub const DATATYPE: &str = "bclearer:datatype";

pub const SEED_CATEGORIES: [&str; 3] = [INDIVIDUAL, TYPE, TUPLE];
pub const SEED_RELATIONS: [&str; 5] = [INSTANCE_OF, SUBTYPE_OF, WHOLE_PART, DEBIT_REL, CREDIT_REL];

pub fn category_id(payload: &str) -> ContentId {
    element_id(ElementKind::SeedCategory, &[], payload)
}

pub fn relation_id(payload: &str) -> ContentId {
    element_id(ElementKind::RelationType, &[], payload)
}

static INSTANCE_OF_ID: LazyLock<ContentId> = LazyLock::new(|| relation_id(INSTANCE_OF));
static SUBTYPE_OF_ID: LazyLock<ContentId> = LazyLock::new(|| relation_id(SUBTYPE_OF));
static DEBIT_REL_ID: LazyLock<ContentId> = LazyLock::new(|| relation_id(DEBIT_REL));
static CREDIT_REL_ID: LazyLock<ContentId> = LazyLock::new(|| relation_id(CREDIT_REL));
static FOREIGN_KEY_ID: LazyLock<ContentId> = LazyLock::new(|| relation_id(FOREIGN_KEY));
static DATATYPE_ID: LazyLock<ContentId> = LazyLock::new(|| relation_id(DATATYPE));
static INDIVIDUAL_ID: LazyLock<ContentId> = LazyLock::new(|| category_id(INDIVIDUAL));
static TYPE_ID: LazyLock<ContentId> = LazyLock::new(|| category_id(TYPE));
static TUPLE_ID: LazyLock<ContentId> = LazyLock::new(|| category_id(TUPLE));

pub fn instance_of() -> ContentId {
    *INSTANCE_OF_ID
}

pub fn subtype_of() -> ContentId {
    *SUBTYPE_OF_ID
}

pub fn debit_rel() -> ContentId {
    *DEBIT_REL_ID
}

pub fn credit_rel() -> ContentId {
    *CREDIT_REL_ID
}

pub fn foreign_key() -> ContentId {
    *FOREIGN_KEY_ID
}

pub fn datatype() -> ContentId {
    *DATATYPE_ID
}

pub fn individual() -> ContentId {
    *INDIVIDUAL_ID
}

pub fn type_category() -> ContentId {
    *TYPE_ID
}

pub fn tuple_category() -> ContentId {
    *TUPLE_ID
}

/// True for the eight elements that make up the seed.
pub fn is_seed_element(id: &ContentId) -> bool {
    SEED_CATEGORIES.iter().any(|p| category_id(p) == *id)
        || SEED_RELATIONS.iter().any(|p| relation_id(p) == *id)
}

/// Human label for a payload: reserved prefixes are dropped.
pub fn label(payload: &str) -> &str {
    payload
        .strip_prefix("boro:")
        .or_else(|| payload.strip_prefix("bclearer:"))
        .unwrap_or(payload)
}
