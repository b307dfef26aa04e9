//! The built-in sampling packages, all backed by the simulated device.

use std::sync::Arc;

use super::device::{SimulatedDevice, DEFAULT_POSITION};
use super::package::SamplingPackage;
use super::probe::{Probe, ProbeKind};
use super::ProbeError;
use crate::protocol::{FormatKey, Measure, PowerTier, SamplingSchema};
use crate::transform::{phone_log_privacy, DatumTransformer};

/// A package described by a table of `(probe kind, default measure)` rows.
#[derive(Debug, Clone)]
pub struct TablePackage {
    name: String,
    entries: Vec<(ProbeKind, Measure)>,
    privacy: Vec<DatumTransformer>,
    device_role: String,
}

impl TablePackage {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            entries: Vec::new(),
            privacy: Vec::new(),
            device_role: "phone".into(),
        }
    }

    pub fn measure(mut self, kind: ProbeKind, default: Measure) -> Self {
        self.entries.push((kind, default));
        self
    }

    pub fn privacy(mut self, t: DatumTransformer) -> Self {
        self.privacy.push(t);
        self
    }

    pub fn device_role(mut self, role: impl Into<String>) -> Self {
        self.device_role = role.into();
        self
    }
}

impl SamplingPackage for TablePackage {
    fn name(&self) -> &str {
        &self.name
    }

    fn measure_types(&self) -> Vec<FormatKey> {
        self.entries.iter().map(|(_, m)| m.kind.clone()).collect()
    }

    fn probe_kind(&self, kind: &FormatKey) -> Option<ProbeKind> {
        self.entries.iter().find(|(_, m)| &m.kind == kind).map(|(k, _)| *k)
    }

    fn common_schema(&self) -> SamplingSchema {
        self.entries
            .iter()
            .fold(SamplingSchema::new(&self.name, PowerTier::Normal), |s, (_, m)| s.with(m.clone()))
    }

    fn privacy_functions(&self) -> Vec<DatumTransformer> {
        self.privacy.clone()
    }

    fn create_probe(&self, m: &Measure, device: &Arc<SimulatedDevice>) -> Result<Probe, ProbeError> {
        let kind = self
            .probe_kind(&m.kind)
            .ok_or_else(|| ProbeError::UnknownType(m.kind.clone()))?;
        Ok(Probe::simulated(kind, m.clone(), Arc::clone(device))?.with_device_role(&self.device_role))
    }
}

fn periodic(kind: &str, ms: u64) -> Measure {
    Measure::new(FormatKey::carp(kind)).with_frequency(ms)
}

pub fn sensors() -> TablePackage {
    TablePackage::new("sensors")
        .measure(ProbeKind::Periodic, periodic("accelerometer", 1_000))
        .measure(ProbeKind::Periodic, periodic("gyroscope", 1_000))
        .measure(ProbeKind::Periodic, periodic("light", 10_000))
}

pub fn device() -> TablePackage {
    TablePackage::new("device")
        .measure(ProbeKind::Stream, Measure::new(FormatKey::carp("battery")))
        .measure(ProbeKind::Periodic, periodic("memory", 60_000))
        .measure(ProbeKind::Stream, Measure::new(FormatKey::carp("screen")))
}

pub fn context() -> TablePackage {
    TablePackage::new("context")
        .measure(ProbeKind::Periodic, periodic("location", 30_000))
        .measure(
            ProbeKind::Stream,
            periodic("geofence", 1_000)
                .with_config("fence_id", "home")
                .with_config("center_lat", DEFAULT_POSITION.0)
                .with_config("center_lon", DEFAULT_POSITION.1)
                .with_config("radius_m", 100)
                .with_config("dwell_ms", 300_000),
        )
        .measure(ProbeKind::Periodic, periodic("weather", 3_600_000))
        .measure(ProbeKind::Periodic, periodic("air_quality", 3_600_000))
}

pub fn connectivity() -> TablePackage {
    TablePackage::new("connectivity")
        .measure(
            ProbeKind::PeriodicStream,
            periodic("bluetooth", 600_000).with_duration(5_000),
        )
        .measure(ProbeKind::Periodic, periodic("wifi", 600_000))
}

pub fn audio() -> TablePackage {
    TablePackage::new("audio").measure(ProbeKind::Periodic, periodic("noise", 60_000))
}

pub fn apps() -> TablePackage {
    TablePackage::new("apps").measure(ProbeKind::Periodic, periodic("app_usage", 3_600_000))
}

pub fn communication() -> TablePackage {
    TablePackage::new("communication")
        .measure(ProbeKind::OneShot, Measure::new(FormatKey::carp("phone_log")))
        .privacy(phone_log_privacy())
}

/// Blood pressure from a simulated external monitor.
pub fn health() -> TablePackage {
    TablePackage::new("health")
        .measure(ProbeKind::Periodic, periodic("bloodpressure", 3_600_000))
        .device_role("external")
}

pub fn packages() -> Vec<Arc<dyn SamplingPackage>> {
    vec![
        Arc::new(sensors()),
        Arc::new(device()),
        Arc::new(context()),
        Arc::new(connectivity()),
        Arc::new(audio()),
        Arc::new(apps()),
        Arc::new(communication()),
        Arc::new(health()),
    ]
}
