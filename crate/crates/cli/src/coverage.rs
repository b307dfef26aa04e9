//! Per-measure, per-hour sampling coverage.
//!
//! Only fixed-frequency measures have a defined expectation: enabled measures
//! of periodic probes whose task starts immediately. Hour buckets are aligned
//! to the run start, and a trailing partial hour gets a proportionally
//! smaller expectation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use mobsense_core::clock::MS_PER_HOUR;
use mobsense_core::probes::ProbeKind;
use mobsense_core::{DataPoint, EpochMs, FormatKey, PackageRegistry, StudyProtocol, TransformerRegistry, Trigger};
use serde::Serialize;

pub const COVERAGE_HEADER: &str = "measure,hour,expected,collected,coverage";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageCell {
    pub measure: String,
    pub hour: i64,
    pub expected: u64,
    pub collected: u64,
    pub coverage: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CoverageReport {
    pub cells: Vec<CoverageCell>,
}

/// A measure whose coverage can be computed: the key its points carry in
/// the sink and its nominal sampling period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoveredMeasure {
    pub key: String,
    pub frequency_ms: u64,
}

pub fn covered_measures(
    protocol: &StudyProtocol,
    packages: &PackageRegistry,
    transformers: &TransformerRegistry,
) -> Vec<CoveredMeasure> {
    let mut out: Vec<CoveredMeasure> = Vec::new();
    for tt in &protocol.trigger_tasks {
        if !matches!(tt.trigger, Trigger::Immediate {}) {
            continue;
        }
        for m in tt.task.measures.iter().filter(|m| m.enabled) {
            if packages.probe_kind(&m.kind) != Some(ProbeKind::Periodic) {
                continue;
            }
            let default = packages
                .common_schema()
                .ok()
                .and_then(|s| s.get(&m.kind).and_then(|d| d.frequency_ms()));
            let Some(frequency_ms) = m.frequency_ms().or(default).filter(|f| *f > 0) else {
                continue;
            };
            let key = output_key(&m.kind, &protocol.data_format, transformers).to_string();
            if !out.iter().any(|c| c.key == key) {
                out.push(CoveredMeasure { key, frequency_ms });
            }
        }
    }
    out
}

/// The format key a raw measure's points carry once they reach the sink.
fn output_key(kind: &FormatKey, data_format: &str, transformers: &TransformerRegistry) -> FormatKey {
    match transformers.lookup(data_format, kind) {
        Some(_) => kind.with_namespace(data_format).unwrap_or_else(|_| kind.clone()),
        None => kind.clone(),
    }
}

/// Tally of points per (format key, hour bucket relative to `start`).
pub fn tally<'a>(points: impl IntoIterator<Item = &'a DataPoint>, start: EpochMs) -> BTreeMap<(String, i64), u64> {
    let mut counts = BTreeMap::new();
    for p in points {
        let bucket = (p.header.start_time - start).div_euclid(MS_PER_HOUR);
        *counts.entry((p.header.format.to_string(), bucket)).or_insert(0) += 1;
    }
    counts
}

impl CoverageReport {
    pub fn build(measures: &[CoveredMeasure], counts: &BTreeMap<(String, i64), u64>, duration_ms: i64) -> Self {
        let hours = (duration_ms + MS_PER_HOUR - 1).div_euclid(MS_PER_HOUR);
        let mut cells = Vec::new();
        for m in measures {
            for hour in 0..hours {
                let len = (duration_ms - hour * MS_PER_HOUR).min(MS_PER_HOUR);
                let expected = len as u64 / m.frequency_ms;
                let collected = counts.get(&(m.key.clone(), hour)).copied().unwrap_or(0);
                let coverage = if expected == 0 {
                    0.0
                } else {
                    collected as f64 / expected as f64
                };
                cells.push(CoverageCell {
                    measure: m.key.clone(),
                    hour,
                    expected,
                    collected,
                    coverage,
                });
            }
        }
        Self { cells }
    }

    pub fn cell(&self, measure: &str, hour: i64) -> Option<&CoverageCell> {
        self.cells.iter().find(|c| c.measure == measure && c.hour == hour)
    }

    pub fn total_collected(&self) -> u64 {
        self.cells.iter().map(|c| c.collected).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(COVERAGE_HEADER);
        out.push('\n');
        for c in &self.cells {
            let _ = writeln!(out, "{},{},{},{},{:.6}", c.measure, c.hour, c.expected, c.collected, c.coverage);
        }
        out
    }

    pub fn from_csv(text: &str) -> anyhow::Result<Self> {
        #[derive(serde::Deserialize)]
        struct Row {
            measure: String,
            hour: i64,
            expected: u64,
            collected: u64,
            coverage: f64,
        }
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut cells = Vec::new();
        for row in reader.deserialize() {
            let r: Row = row?;
            cells.push(CoverageCell {
                measure: r.measure,
                hour: r.hour,
                expected: r.expected,
                collected: r.collected,
                coverage: r.coverage,
            });
        }
        Ok(Self { cells })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mobsense_core::sinks::DataEndPoint;
    use mobsense_core::{Measure, Task};

    fn registries() -> (PackageRegistry, TransformerRegistry) {
        (PackageRegistry::with_builtin(), TransformerRegistry::with_builtin())
    }

    #[test]
    fn only_immediate_periodic_enabled_measures_count() {
        let p = StudyProtocol::new("s", "u", DataEndPoint::Memory)
            .add_trigger_task(
                Trigger::immediate(),
                Task::new(
                    "a",
                    vec![
                        Measure::new(FormatKey::carp("location")).with_frequency(30_000),
                        Measure::new(FormatKey::carp("memory")),
                        Measure::new(FormatKey::carp("light")).disabled(),
                        Measure::new(FormatKey::carp("geofence")),
                        Measure::new(FormatKey::carp("battery")),
                    ],
                ),
            )
            .add_trigger_task(
                Trigger::Periodic { period_ms: 1000 },
                Task::new("b", vec![Measure::new(FormatKey::carp("noise"))]),
            );
        let (pk, tr) = registries();
        let got = covered_measures(&p, &pk, &tr);
        assert_eq!(
            got,
            vec![
                CoveredMeasure { key: "carp.location".into(), frequency_ms: 30_000 },
                CoveredMeasure { key: "carp.memory".into(), frequency_ms: 60_000 },
            ]
        );
    }

    #[test]
    fn mapped_types_use_target_key() {
        let p = StudyProtocol::new("s", "u", DataEndPoint::Memory)
            .with_format("omh")
            .add_trigger_task(
                Trigger::immediate(),
                Task::new(
                    "a",
                    vec![
                        Measure::new(FormatKey::carp("bloodpressure")),
                        Measure::new(FormatKey::carp("light")),
                    ],
                ),
            );
        let (pk, tr) = registries();
        let keys: Vec<_> = covered_measures(&p, &pk, &tr).into_iter().map(|c| c.key).collect();
        assert_eq!(keys, ["omh.bloodpressure", "carp.light"]);
    }

    #[test]
    fn expected_counts_per_bucket() {
        let m = [CoveredMeasure { key: "carp.location".into(), frequency_ms: 30_000 }];
        let mut counts = BTreeMap::new();
        counts.insert(("carp.location".to_string(), 0), 120);
        counts.insert(("carp.location".to_string(), 1), 60);
        let r = CoverageReport::build(&m, &counts, 90 * 60_000);
        assert_eq!(r.cells.len(), 2);
        assert_eq!((r.cells[0].expected, r.cells[0].coverage), (120, 1.0));
        assert_eq!((r.cells[1].expected, r.cells[1].coverage), (60, 1.0));
        assert_eq!(r.total_collected(), 180);
    }

    #[test]
    fn csv_round_trip() {
        let m = [CoveredMeasure { key: "carp.light".into(), frequency_ms: 1000 }];
        let mut counts = BTreeMap::new();
        counts.insert(("carp.light".to_string(), 0), 3000);
        let r = CoverageReport::build(&m, &counts, MS_PER_HOUR);
        let csv = r.to_csv();
        assert!(csv.starts_with("measure,hour,expected,collected,coverage\ncarp.light,0,3600,3000,0.833333\n"));
        let back = CoverageReport::from_csv(&csv).unwrap();
        assert_eq!(back.cells[0].collected, 3000);
        assert!((back.cells[0].coverage - 5.0 / 6.0).abs() < 1e-6);
    }
}
