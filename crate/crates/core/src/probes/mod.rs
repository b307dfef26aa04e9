//! Sampling packages, probes and the simulated device behind them.

pub mod builtin;
mod datum;
mod device;
mod geofence;
mod package;
mod probe;

pub use datum::{
    BatteryStatus, CallDirection, DataPoint, DataPointHeader, Datum, GeofenceEvent, Payload,
    ScreenEvent,
};
pub use device::{
    parse_battery_csv, parse_location_csv, BatterySample, DeviceError, LocationSample,
    SimulatedDevice, WeatherStub, DEFAULT_POSITION,
};
pub use geofence::{geofence_evaluate, haversine_m, Geofence, GeofenceDetector};
pub use package::{common_schema_of, PackageRegistry, SamplingPackage};
pub use probe::{LifecycleAction, Probe, ProbeKind, ProbeState, Sample, BURST_SPACING_MS};

use crate::protocol::FormatKey;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProbeError {
    #[error("illegal probe transition: {action} from {from}")]
    IllegalTransition {
        from: ProbeState,
        action: LifecycleAction,
    },
    #[error("measure type mismatch: probe samples {expected}, got {got}")]
    TypeMismatch { expected: FormatKey, got: FormatKey },
    #[error("unknown measure type {0}")]
    UnknownType(FormatKey),
    #[error("measure type {0} is already registered")]
    Conflict(FormatKey),
    #[error("invalid configuration for {kind}: {message}")]
    Config { kind: FormatKey, message: String },
    #[error(transparent)]
    Device(#[from] DeviceError),
}
