use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::{FormatKey, StudyProtocol, Trigger};
use crate::probes::PackageRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    fn push(&mut self, severity: Severity, path: String, message: String) {
        self.issues.push(ValidationIssue {
            severity,
            path,
            message,
        });
    }
}

/// Checks a parsed protocol against the registered sampling packages.
pub fn validate_protocol(p: &StudyProtocol, registry: &PackageRegistry) -> ValidationReport {
    let mut report = ValidationReport::default();
    let sampled: HashSet<&FormatKey> = p.measures().map(|m| &m.kind).collect();

    for (i, tt) in p.trigger_tasks.iter().enumerate() {
        if let Trigger::SamplingEvent {
            source_measure_type,
            ..
        } = &tt.trigger
        {
            let path = format!("$.trigger_tasks[{i}].trigger.source_measure_type");
            if !registry.is_registered(source_measure_type) {
                report.push(
                    Severity::Error,
                    path,
                    format!("unknown measure type {source_measure_type}"),
                );
            } else if !sampled.contains(source_measure_type) {
                report.push(
                    Severity::Error,
                    path,
                    format!("sampling event source {source_measure_type} is not sampled by any task"),
                );
            }
        }
        for (j, m) in tt.task.measures.iter().enumerate() {
            let path = format!("$.trigger_tasks[{i}].task.measures[{j}]");
            if !registry.is_registered(&m.kind) {
                report.push(
                    Severity::Error,
                    format!("{path}.type"),
                    format!("unknown measure type {}", m.kind),
                );
            }
            if !m.enabled {
                report.push(
                    Severity::Warning,
                    format!("{path}.enabled"),
                    format!("measure {} is disabled", m.kind),
                );
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::PackageRegistry;
    use crate::protocol::{FieldCondition, Measure, Task};
    use crate::sinks::DataEndPoint;

    fn protocol(tasks: Vec<(Trigger, Vec<Measure>)>) -> StudyProtocol {
        tasks.into_iter().enumerate().fold(
            StudyProtocol::new("s", "u", DataEndPoint::Memory),
            |p, (i, (trigger, measures))| p.add_trigger_task(trigger, Task::new(format!("t{i}"), measures)),
        )
    }

    #[test]
    fn valid_protocol_has_empty_report() {
        let reg = PackageRegistry::with_builtin();
        let p = protocol(vec![(
            Trigger::immediate(),
            vec![
                Measure::new(FormatKey::carp("light")).with_frequency(1000),
                Measure::new(FormatKey::carp("battery")),
            ],
        )]);
        let report = validate_protocol(&p, &reg);
        assert!(report.is_empty(), "{report:?}");
    }

    #[test]
    fn unknown_measure_type() {
        let reg = PackageRegistry::with_builtin();
        let p = protocol(vec![(
            Trigger::immediate(),
            vec![Measure::new(FormatKey::carp("unknown_sensor"))],
        )]);
        let report = validate_protocol(&p, &reg);
        assert_eq!(report.issues.len(), 1);
        let issue = &report.issues[0];
        assert_eq!(issue.severity, Severity::Error);
        assert_eq!(issue.path, "$.trigger_tasks[0].task.measures[0].type");
        assert!(issue.message.contains("unknown measure type"));
    }

    #[test]
    fn sampling_event_without_source_task() {
        let reg = PackageRegistry::with_builtin();
        let p = protocol(vec![
            (
                Trigger::immediate(),
                vec![Measure::new(FormatKey::carp("light")).with_frequency(1000)],
            ),
            (
                Trigger::SamplingEvent {
                    source_measure_type: FormatKey::carp("geofence"),
                    condition: Some(FieldCondition {
                        field_name: "event".into(),
                        expected_value: "ENTER".into(),
                    }),
                },
                vec![Measure::new(FormatKey::carp("bluetooth"))],
            ),
        ]);
        let report = validate_protocol(&p, &reg);
        assert_eq!(report.errors().count(), 1, "{report:?}");
        assert_eq!(report.issues[0].path, "$.trigger_tasks[1].trigger.source_measure_type");
        assert_eq!(validate_protocol(&p, &reg), report);
    }

    #[test]
    fn disabled_measure_warns() {
        let reg = PackageRegistry::with_builtin();
        let p = protocol(vec![(
            Trigger::immediate(),
            vec![Measure::new(FormatKey::carp("light")).disabled()],
        )]);
        let report = validate_protocol(&p, &reg);
        assert!(!report.has_errors());
        assert_eq!(report.warnings().count(), 1);
    }
}
