use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{valid_namespace, Measure, ProtocolError, Trigger, CARP_NAMESPACE};
use crate::sinks::DataEndPoint;

/// A declarative study: what to sample, when, and where the data goes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyProtocol {
    pub id: String,
    pub user_id: String,
    pub name: String,
    pub data_end_point: DataEndPoint,
    #[serde(default = "default_format")]
    pub data_format: String,
    pub trigger_tasks: Vec<TriggerTask>,
    #[serde(default)]
    pub privacy_enabled: bool,
}

fn default_format() -> String {
    CARP_NAMESPACE.to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerTask {
    pub trigger: Trigger,
    pub task: Task,
}

/// Measures started and stopped together by one trigger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub name: String,
    pub measures: Vec<Measure>,
}

impl Task {
    pub fn new(name: impl Into<String>, measures: Vec<Measure>) -> Self {
        Self {
            name: name.into(),
            measures,
        }
    }
}

impl StudyProtocol {
    pub fn new(id: impl Into<String>, user_id: impl Into<String>, data_end_point: DataEndPoint) -> Self {
        Self {
            id: id.into(),
            user_id: user_id.into(),
            name: String::new(),
            data_end_point,
            data_format: default_format(),
            trigger_tasks: Vec::new(),
            privacy_enabled: false,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_format(mut self, namespace: impl Into<String>) -> Self {
        self.data_format = namespace.into();
        self
    }

    pub fn with_privacy(mut self, enabled: bool) -> Self {
        self.privacy_enabled = enabled;
        self
    }

    pub fn add_trigger_task(mut self, trigger: Trigger, task: Task) -> Self {
        self.trigger_tasks.push(TriggerTask { trigger, task });
        self
    }

    pub fn measures(&self) -> impl Iterator<Item = &Measure> {
        self.trigger_tasks.iter().flat_map(|tt| tt.task.measures.iter())
    }

    /// Checks every structural invariant of the protocol and its parts.
    pub fn check_invariants(&self) -> Result<(), ProtocolError> {
        let fail = |path: String, message: String| Err(ProtocolError::Invariant { path, message });
        if self.id.trim().is_empty() {
            return fail("$.id".into(), "id must be non-empty".into());
        }
        if self.user_id.trim().is_empty() {
            return fail("$.user_id".into(), "user_id must be non-empty".into());
        }
        if !valid_namespace(&self.data_format) {
            return fail(
                "$.data_format".into(),
                format!("'{}' is not a valid namespace", self.data_format),
            );
        }
        if let Err(msg) = self.data_end_point.check() {
            return fail("$.data_end_point".into(), msg);
        }
        if self.trigger_tasks.is_empty() {
            return fail(
                "$.trigger_tasks".into(),
                "at least one trigger/task pair is required".into(),
            );
        }
        for (i, tt) in self.trigger_tasks.iter().enumerate() {
            let base = format!("$.trigger_tasks[{i}]");
            if let Trigger::Periodic { period_ms: 0 } = tt.trigger {
                return fail(format!("{base}.trigger.period_ms"), "period must be > 0".into());
            }
            if tt.task.measures.is_empty() {
                return fail(
                    format!("{base}.task.measures"),
                    "a task needs at least one measure".into(),
                );
            }
            let mut seen = HashSet::new();
            for (j, m) in tt.task.measures.iter().enumerate() {
                let mpath = format!("{base}.task.measures[{j}]");
                if !seen.insert(&m.kind) {
                    return fail(
                        format!("{mpath}.type"),
                        format!("measure type {} appears twice in task '{}'", m.kind, tt.task.name),
                    );
                }
                if let Err((key, msg)) = m.check() {
                    return fail(format!("{mpath}.configuration.{key}"), msg);
                }
            }
        }
        Ok(())
    }
}

/// Parses and validates a protocol document.
pub fn parse_protocol(json_text: &str) -> Result<StudyProtocol, ProtocolError> {
    let value: Value = serde_json::from_str(json_text).map_err(|e| ProtocolError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let protocol: StudyProtocol =
        serde_path_to_error::deserialize(value).map_err(|e| ProtocolError::Schema {
            path: json_path(&e.path().to_string()),
            message: e.inner().to_string(),
        })?;
    protocol.check_invariants()?;
    Ok(protocol)
}

fn json_path(p: &str) -> String {
    if p.is_empty() || p == "." {
        "$".to_owned()
    } else if p.starts_with('[') {
        format!("${p}")
    } else {
        format!("$.{p}")
    }
}

/// Canonical JSON: object keys sorted, compact.
pub fn serialize_protocol(p: &StudyProtocol) -> String {
    // Going through `Value` sorts keys at every level, including the
    // hand-written endpoint serializer.
    let value = serde_json::to_value(p).expect("protocol serializes to JSON");
    serde_json::to_string(&value).expect("JSON value renders")
}
