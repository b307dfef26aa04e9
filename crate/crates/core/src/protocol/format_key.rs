use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Namespace used by the native data format.
pub const CARP_NAMESPACE: &str = "carp";
pub const OMH_NAMESPACE: &str = "omh";

/// A dotted `namespace.type` identifier such as `carp.location`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FormatKey {
    namespace: String,
    kind: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid format key '{0}': expected lowercase '<namespace>.<type>'")]
pub struct FormatKeyError(pub String);

fn valid_segment(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-')
}

pub(crate) fn valid_namespace(s: &str) -> bool {
    valid_segment(s)
}

impl FormatKey {
    pub fn new(namespace: &str, kind: &str) -> Result<Self, FormatKeyError> {
        if valid_segment(namespace) && valid_segment(kind) {
            Ok(Self {
                namespace: namespace.to_owned(),
                kind: kind.to_owned(),
            })
        } else {
            Err(FormatKeyError(format!("{namespace}.{kind}")))
        }
    }

    /// Shorthand for a key in the `carp` namespace. Panics on an invalid type
    /// name, so only use it with literals.
    pub fn carp(kind: &str) -> Self {
        Self::new(CARP_NAMESPACE, kind).expect("valid carp type literal")
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    /// The type segment (`location` in `carp.location`).
    pub fn kind(&self) -> &str {
        &self.kind
    }

    /// Same type, different namespace.
    pub fn with_namespace(&self, namespace: &str) -> Result<Self, FormatKeyError> {
        Self::new(namespace, &self.kind)
    }
}

impl fmt::Display for FormatKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.namespace, self.kind)
    }
}

impl FromStr for FormatKey {
    type Err = FormatKeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('.') {
            Some((ns, kind)) => Self::new(ns, kind).map_err(|_| FormatKeyError(s.to_owned())),
            None => Err(FormatKeyError(s.to_owned())),
        }
    }
}

impl Serialize for FormatKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FormatKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
