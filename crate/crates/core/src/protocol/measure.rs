use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::FormatKey;

pub const FREQUENCY_KEY: &str = "frequency_ms";
pub const DURATION_KEY: &str = "duration_ms";

/// What to sample, and how.
///
/// Configuration is an open string map. `frequency_ms` and `duration_ms` are
/// interpreted by the runtime; every other key is carried through untouched
/// for the package that owns the measure type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measure {
    #[serde(rename = "type")]
    pub kind: FormatKey,
    pub enabled: bool,
    #[serde(default)]
    pub configuration: BTreeMap<String, String>,
}

impl Measure {
    pub fn new(kind: FormatKey) -> Self {
        Self {
            kind,
            enabled: true,
            configuration: BTreeMap::new(),
        }
    }

    pub fn with_frequency(mut self, ms: u64) -> Self {
        self.configuration
            .insert(FREQUENCY_KEY.to_owned(), ms.to_string());
        self
    }

    pub fn with_duration(mut self, ms: u64) -> Self {
        self.configuration
            .insert(DURATION_KEY.to_owned(), ms.to_string());
        self
    }

    pub fn with_config(mut self, key: &str, value: impl ToString) -> Self {
        self.configuration.insert(key.to_owned(), value.to_string());
        self
    }

    pub fn disabled(mut self) -> Self {
        self.enabled = false;
        self
    }

    /// `frequency_ms`, if present and well-formed. Despite the name this is a
    /// sampling period.
    pub fn frequency_ms(&self) -> Option<u64> {
        self.configuration
            .get(FREQUENCY_KEY)
            .and_then(|v| v.trim().parse().ok())
    }

    pub fn duration_ms(&self) -> Option<u64> {
        self.configuration
            .get(DURATION_KEY)
            .and_then(|v| v.trim().parse().ok())
    }

    pub fn config_f64(&self, key: &str) -> Option<f64> {
        self.configuration.get(key).and_then(|v| v.trim().parse().ok())
    }

    pub fn config_str(&self, key: &str) -> Option<&str> {
        self.configuration.get(key).map(String::as_str)
    }

    /// Checks the recognized configuration keys. Returns the offending key and
    /// a message on failure.
    pub fn check(&self) -> Result<(), (&'static str, String)> {
        let freq = match self.configuration.get(FREQUENCY_KEY) {
            None => None,
            Some(raw) => match raw.trim().parse::<u64>() {
                Ok(0) => return Err((FREQUENCY_KEY, "frequency_ms must be > 0".into())),
                Ok(v) => Some(v),
                Err(_) => {
                    return Err((
                        FREQUENCY_KEY,
                        format!("frequency_ms '{raw}' is not a non-negative integer"),
                    ))
                }
            },
        };
        if let Some(raw) = self.configuration.get(DURATION_KEY) {
            let dur = raw.trim().parse::<u64>().map_err(|_| {
                (
                    DURATION_KEY,
                    format!("duration_ms '{raw}' is not a non-negative integer"),
                )
            })?;
            if let Some(f) = freq {
                if dur > f {
                    return Err((
                        DURATION_KEY,
                        format!("duration_ms {dur} exceeds frequency_ms {f}"),
                    ));
                }
            }
        }
        Ok(())
    }
}
