//! Data points and their typed payloads.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::clock::EpochMs;
use crate::protocol::FormatKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatteryStatus {
    Charging,
    Discharging,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScreenEvent {
    On,
    Off,
    Unlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallDirection {
    In,
    Out,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GeofenceEvent {
    Enter,
    Dwell,
    Exit,
}

impl fmt::Display for GeofenceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeofenceEvent::Enter => "ENTER",
            GeofenceEvent::Dwell => "DWELL",
            GeofenceEvent::Exit => "EXIT",
        })
    }
}

macro_rules! payloads {
    ($( $variant:ident($name:literal) { $($field:ident : $ty:ty),* $(,)? } ),* $(,)?) => {
        /// Typed datum payloads. The variant's type name always matches the
        /// type segment of the owning datum's [`FormatKey`], except for
        /// [`Payload::Generic`], which extension packages use for anything
        /// not modelled here.
        #[derive(Debug, Clone, PartialEq)]
        pub enum Payload {
            $( $variant { $($field: $ty),* }, )*
            Generic(Map<String, Value>),
        }

        mod wire {
            use super::*;
            $(
                #[derive(Serialize, Deserialize)]
                #[serde(deny_unknown_fields)]
                pub(super) struct $variant { $(pub(super) $field: $ty),* }
            )*
        }

        impl Payload {
            /// The type segment this payload belongs to, or `None` for
            /// generic payloads.
            pub fn type_name(&self) -> Option<&'static str> {
                match self {
                    $( Payload::$variant { .. } => Some($name), )*
                    Payload::Generic(_) => None,
                }
            }

            /// The payload as a flat JSON object.
            pub fn to_json(&self) -> Map<String, Value> {
                let value = match self {
                    $( Payload::$variant { $($field),* } => serde_json::to_value(wire::$variant {
                        $($field: $field.clone()),*
                    }), )*
                    Payload::Generic(m) => return m.clone(),
                };
                match value {
                    Ok(Value::Object(m)) => m,
                    _ => Map::new(),
                }
            }

            /// Reads a payload body for the given type segment. Unknown type
            /// names produce a generic payload.
            pub fn from_json(type_name: &str, body: Map<String, Value>) -> Result<Self, serde_json::Error> {
                match type_name {
                    $( $name => {
                        let w: wire::$variant = serde_json::from_value(Value::Object(body))?;
                        Ok(Payload::$variant { $($field: w.$field),* })
                    } )*
                    _ => Ok(Payload::Generic(body)),
                }
            }
        }
    };
}

payloads! {
    Accelerometer("accelerometer") { x: f64, y: f64, z: f64 },
    Gyroscope("gyroscope") { x: f64, y: f64, z: f64 },
    Light("light") { lux: f64 },
    Location("location") { lat: f64, lon: f64 },
    Battery("battery") { level: u8, status: BatteryStatus },
    Memory("memory") { free_bytes: u64 },
    Screen("screen") { event: ScreenEvent },
    PhoneLog("phone_log") { number: String, duration_s: u32, direction: CallDirection },
    Weather("weather") { temp_c: f64, condition: String },
    AirQuality("air_quality") { aqi: u32, source: String },
    Wifi("wifi") { ssid: String, bssid: String },
    Noise("noise") { mean_db: f64, max_db: f64 },
    AppUsage("app_usage") { foreground_app: String, usage_ms: u64 },
    Bluetooth("bluetooth") {
        device_name: String,
        device_id: String,
        device_type: String,
        power_level: i32,
        rssi: i32,
        scan_device_count: u32,
    },
    BloodPressure("bloodpressure") { systolic: f64, diastolic: f64, position: String },
    Geofence("geofence") { event: GeofenceEvent, fence_id: String },
    Error("error") { message: String },
}

/// The body of a data point: a format key plus its payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Datum {
    pub format: FormatKey,
    pub payload: Payload,
}

impl Datum {
    /// A datum in the `carp` namespace whose type follows from the payload.
    /// Generic payloads need [`Datum::with_format`].
    pub fn carp(payload: Payload) -> Self {
        let kind = payload.type_name().unwrap_or("generic");
        Self {
            format: FormatKey::carp(kind),
            payload,
        }
    }

    pub fn with_format(format: FormatKey, payload: Payload) -> Self {
        Self { format, payload }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Datum::carp(Payload::Error {
            message: message.into(),
        })
    }

    /// Whether the payload variant agrees with the format's type segment.
    pub fn is_consistent(&self) -> bool {
        match self.payload.type_name() {
            Some(name) => name == self.format.kind(),
            None => true,
        }
    }

    /// String rendering of one payload field, used for event predicates.
    pub fn field_string(&self, field: &str) -> Option<String> {
        match self.payload.to_json().get(field)? {
            Value::String(s) => Some(s.clone()),
            Value::Null => None,
            other => Some(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPointHeader {
    pub study_id: String,
    pub user_id: String,
    pub format: FormatKey,
    pub start_time: EpochMs,
    pub end_time: Option<EpochMs>,
    pub device_role: String,
}

/// Header plus datum; the unit flowing through the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub header: DataPointHeader,
    pub body: Datum,
}

impl DataPoint {
    pub fn new(
        study_id: impl Into<String>,
        user_id: impl Into<String>,
        device_role: impl Into<String>,
        start_time: EpochMs,
        body: Datum,
    ) -> Self {
        Self {
            header: DataPointHeader {
                study_id: study_id.into(),
                user_id: user_id.into(),
                format: body.format.clone(),
                start_time,
                end_time: None,
                device_role: device_role.into(),
            },
            body,
        }
    }

    pub fn with_end_time(mut self, end: EpochMs) -> Self {
        self.header.end_time = Some(end);
        self
    }

    /// Replaces the body and keeps the header format in step with it.
    pub fn replace_body(&mut self, body: Datum) {
        self.header.format = body.format.clone();
        self.body = body;
    }

    pub fn is_valid(&self) -> bool {
        self.header.format == self.body.format
            && self.body.is_consistent()
            && self.header.end_time.is_none_or(|e| e >= self.header.start_time)
    }
}
