//! Study domain model: protocols, triggers, tasks, measures and sampling
//! schemas, plus the canonical JSON form.

mod format_key;
mod measure;
mod schema;
mod study;
mod trigger;
mod validate;

pub use format_key::{FormatKey, FormatKeyError, CARP_NAMESPACE, OMH_NAMESPACE};
pub use measure::{Measure, DURATION_KEY, FREQUENCY_KEY};
pub use schema::{PowerTier, SamplingSchema};
pub use study::{parse_protocol, serialize_protocol, StudyProtocol, Task, TriggerTask};
pub use trigger::{FieldCondition, Recurrence, TimeOfDay, TimeOfDayError, Trigger, Weekday};
pub use validate::{validate_protocol, Severity, ValidationIssue, ValidationReport};

pub(crate) use format_key::valid_namespace;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invariant violated at {path}: {message}")]
    Invariant { path: String, message: String },
    #[error("format key {0} is claimed more than once")]
    Conflict(FormatKey),
    #[error("unknown measure type {0}")]
    UnknownType(FormatKey),
}
