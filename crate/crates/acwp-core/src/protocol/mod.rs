//! Plain-text wire protocol: scalar values, key/value documents, frames,
//! message envelopes, and schema validation.
//!
//! Everything on the wire is human-readable text. Documents are flat
//! `path = value` maps with a canonical (bytewise path-sorted) encoding;
//! frames carry a command line, lowercase headers, and a document body.

mod document;
mod envelope;
mod frame;
mod path;
mod schema;
mod value;

pub use document::{Document, DocumentError};
pub use envelope::{Envelope, EnvelopeError};
pub use frame::{Command, Frame, FrameError, DEFAULT_MAX_FRAME};
pub use path::{Path, PathError};
pub use schema::{
    load_schema_files, load_schema_search_path, parse_schema_set, Constraint, FieldKind,
    FieldRule, MessageSchema, SchemaError, SchemaPath, SchemaSet, ValidationMode, Violation,
};
pub use value::{Decimal, Value, ValueError, ValueKind, DECIMAL_MAX_DIGITS};
