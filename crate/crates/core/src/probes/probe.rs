use std::fmt;
use std::sync::Arc;

use super::datum::{Datum, Payload};
use super::device::SimulatedDevice;
use super::geofence::{Geofence, GeofenceDetector};
use super::ProbeError;
use crate::clock::EpochMs;
use crate::protocol::Measure;

/// Spacing of sub-samples inside a burst.
pub const BURST_SPACING_MS: i64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProbeKind {
    /// One reading per activation.
    OneShot,
    /// One reading every `frequency_ms`.
    Periodic,
    /// Source-driven readings (battery changes, fence crossings, screen events).
    Stream,
    /// Every `frequency_ms`, a burst of readings spanning `duration_ms`.
    PeriodicStream,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProbeState {
    Created,
    Initialized,
    Resumed,
    Paused,
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LifecycleAction {
    Initialize,
    Resume,
    Pause,
    Stop,
}

impl fmt::Display for ProbeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for LifecycleAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A reading produced by a probe, before it gets a data-point header.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: EpochMs,
    pub datum: Datum,
}

#[derive(Debug, Clone)]
enum Source {
    Signal,
    Battery,
    Screen,
    Geofence(Box<GeofenceDetector>),
}

#[derive(Debug, Clone, Copy)]
struct Burst {
    start: EpochMs,
    count: i64,
    index: i64,
}

/// A lifecycle-managed data source for one measure.
#[derive(Debug, Clone)]
pub struct Probe {
    measure: Measure,
    kind: ProbeKind,
    state: ProbeState,
    device: Arc<SimulatedDevice>,
    device_role: String,
    source: Source,
    period_ms: i64,
    duration_ms: i64,
    cursor: Option<EpochMs>,
    burst: Option<Burst>,
}

impl Probe {
    /// Builds a probe for a measure backed by the simulated device.
    pub fn simulated(
        kind: ProbeKind,
        measure: Measure,
        device: Arc<SimulatedDevice>,
    ) -> Result<Self, ProbeError> {
        let type_name = measure.kind.kind();
        let source = match type_name {
            "battery" => Source::Battery,
            "screen" => Source::Screen,
            "geofence" => Source::Geofence(Box::new(GeofenceDetector::new(fence_from(&measure)?))),
            _ => Source::Signal,
        };
        let needs_period = matches!(kind, ProbeKind::Periodic | ProbeKind::PeriodicStream)
            || matches!(source, Source::Geofence(_));
        let period_ms = match measure.frequency_ms() {
            Some(f) if f > 0 => f as i64,
            _ if needs_period => {
                return Err(ProbeError::Config {
                    kind: measure.kind.clone(),
                    message: "frequency_ms is required".into(),
                })
            }
            _ => 0,
        };
        let duration_ms = measure.duration_ms().unwrap_or(0) as i64;
        Ok(Self {
            kind,
            state: ProbeState::Created,
            device,
            device_role: "phone".into(),
            source,
            period_ms,
            duration_ms,
            cursor: None,
            burst: None,
            measure,
        })
    }

    pub fn with_device_role(mut self, role: impl Into<String>) -> Self {
        self.device_role = role.into();
        self
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn kind(&self) -> ProbeKind {
        self.kind
    }

    pub fn state(&self) -> ProbeState {
        self.state
    }

    pub fn device_role(&self) -> &str {
        &self.device_role
    }

    pub fn period_ms(&self) -> i64 {
        self.period_ms
    }

    /// Applies a lifecycle action at time `now`.
    pub fn apply(&mut self, action: LifecycleAction, now: EpochMs) -> Result<(), ProbeError> {
        use LifecycleAction as A;
        use ProbeState as S;
        let next = match (self.state, action) {
            (S::Created, A::Initialize) => S::Initialized,
            (S::Initialized | S::Paused, A::Resume) => S::Resumed,
            (S::Resumed, A::Pause) => S::Paused,
            (S::Stopped, A::Stop) => S::Stopped,
            (_, A::Stop) if self.state != S::Stopped => S::Stopped,
            (from, action) => return Err(ProbeError::IllegalTransition { from, action }),
        };
        self.state = next;
        match next {
            S::Resumed => self.arm(now),
            _ => {
                self.cursor = None;
                self.burst = None;
            }
        }
        Ok(())
    }

    pub fn initialize(&mut self) -> Result<(), ProbeError> {
        self.apply(LifecycleAction::Initialize, 0)
    }

    pub fn resume(&mut self, now: EpochMs) -> Result<(), ProbeError> {
        self.apply(LifecycleAction::Resume, now)
    }

    pub fn pause(&mut self) -> Result<(), ProbeError> {
        self.apply(LifecycleAction::Pause, 0)
    }

    pub fn stop(&mut self) -> Result<(), ProbeError> {
        self.apply(LifecycleAction::Stop, 0)
    }

    fn arm(&mut self, now: EpochMs) {
        self.burst = None;
        self.cursor = Some(match self.source {
            Source::Screen => now + self.device.screen_gap(now),
            _ => now,
        });
    }

    /// Re-arms a one-shot probe for another reading at `now`. No effect on
    /// other kinds or outside the resumed state.
    pub fn trigger_once(&mut self, now: EpochMs) {
        if self.kind == ProbeKind::OneShot && self.state == ProbeState::Resumed {
            self.cursor = Some(self.cursor.map_or(now, |c| c.min(now)));
        }
    }

    /// Replaces the sampling configuration while running. A disabled measure
    /// pauses a resumed probe; re-enabling is left to the owner.
    pub fn set_measure(&mut self, m: Measure) -> Result<(), ProbeError> {
        if m.kind != self.measure.kind {
            return Err(ProbeError::TypeMismatch {
                expected: self.measure.kind.clone(),
                got: m.kind,
            });
        }
        if let Some(f) = m.frequency_ms().filter(|f| *f > 0) {
            self.period_ms = f as i64;
        }
        if let Some(d) = m.duration_ms() {
            self.duration_ms = d as i64;
        }
        let disable = !m.enabled && self.state == ProbeState::Resumed;
        self.measure = m;
        if disable {
            self.pause()?;
        }
        Ok(())
    }

    /// Time of the next reading, if the probe is resumed and has one pending.
    pub fn next_due(&self) -> Option<EpochMs> {
        match self.state {
            ProbeState::Resumed => self.cursor,
            _ => None,
        }
    }

    /// Produces every reading due at or before `now`.
    pub fn poll(&mut self, now: EpochMs) -> Result<Vec<Sample>, ProbeError> {
        let mut out = Vec::new();
        while let Some(t) = self.next_due().filter(|t| *t <= now) {
            self.fire(t, &mut out)?;
        }
        Ok(out)
    }

    fn fire(&mut self, t: EpochMs, out: &mut Vec<Sample>) -> Result<(), ProbeError> {
        let kind = self.measure.kind.clone();
        match &mut self.source {
            Source::Geofence(detector) => {
                let (lat, lon) = self.device.location(t);
                let fence_id = detector.fence().id.clone();
                for event in detector.update(t, lat, lon) {
                    out.push(Sample {
                        time: t,
                        datum: Datum::with_format(
                            kind.clone(),
                            Payload::Geofence {
                                event,
                                fence_id: fence_id.clone(),
                            },
                        ),
                    });
                }
                self.cursor = Some(t + self.period_ms);
                return Ok(());
            }
            Source::Battery => {
                out.push(self.reading(t)?);
                self.cursor = self.device.next_battery_change(t);
                return Ok(());
            }
            Source::Screen => {
                out.push(self.reading(t)?);
                self.cursor = Some(t + self.device.screen_gap(t));
                return Ok(());
            }
            Source::Signal => {}
        }
        match self.kind {
            ProbeKind::OneShot => {
                out.push(self.reading(t)?);
                self.cursor = None;
            }
            ProbeKind::Periodic | ProbeKind::Stream => {
                out.push(self.reading(t)?);
                self.cursor = Some(t + self.period_ms.max(1));
            }
            ProbeKind::PeriodicStream => {
                let burst = match self.burst {
                    Some(b) => b,
                    None => Burst {
                        start: t,
                        count: (self.duration_ms + BURST_SPACING_MS - 1) / BURST_SPACING_MS,
                        index: 0,
                    },
                };
                let burst = Burst {
                    count: burst.count.max(1),
                    ..burst
                };
                out.push(self.reading(t)?);
                if burst.index + 1 < burst.count {
                    self.burst = Some(Burst {
                        index: burst.index + 1,
                        ..burst
                    });
                    self.cursor = Some(burst.start + (burst.index + 1) * BURST_SPACING_MS);
                } else {
                    self.burst = None;
                    self.cursor = Some(burst.start + self.period_ms.max(1));
                }
            }
        }
        Ok(())
    }

    fn reading(&self, t: EpochMs) -> Result<Sample, ProbeError> {
        let mut datum = self.device.signal(&self.measure.kind, t)?;
        datum.format = self.measure.kind.clone();
        Ok(Sample { time: t, datum })
    }
}

fn fence_from(m: &Measure) -> Result<Geofence, ProbeError> {
    let need = |key: &str| {
        m.config_f64(key).ok_or_else(|| ProbeError::Config {
            kind: m.kind.clone(),
            message: format!("missing or non-numeric '{key}'"),
        })
    };
    let radius_m = need("radius_m")?;
    if radius_m <= 0.0 {
        return Err(ProbeError::Config {
            kind: m.kind.clone(),
            message: "radius_m must be > 0".into(),
        });
    }
    Ok(Geofence {
        id: m.config_str("fence_id").unwrap_or("fence").to_owned(),
        center_lat: need("center_lat")?,
        center_lon: need("center_lon")?,
        radius_m,
        dwell_ms: m.config_f64("dwell_ms").map_or(i64::MAX, |d| d as i64),
    })
}
