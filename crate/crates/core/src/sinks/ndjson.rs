//! One-line JSON encoding of data points.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::clock::{format_iso, parse_iso};
use crate::probes::{DataPoint, DataPointHeader, Datum, Payload};
use crate::protocol::FormatKey;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WirePoint {
    study_id: String,
    user_id: String,
    format: FormatKey,
    start_time: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end_time: Option<String>,
    device_role: String,
    body: Map<String, Value>,
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("invalid record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid timestamp '{0}'")]
    Timestamp(String),
}

/// Serializes a point as a single NDJSON line (no trailing newline). Field
/// order is fixed; body keys are sorted.
pub fn serialize_data_point(p: &DataPoint) -> String {
    let wire = WirePoint {
        study_id: p.header.study_id.clone(),
        user_id: p.header.user_id.clone(),
        format: p.header.format.clone(),
        start_time: format_iso(p.header.start_time),
        end_time: p.header.end_time.map(format_iso),
        device_role: p.header.device_role.clone(),
        body: p.body.payload.to_json(),
    };
    serde_json::to_string(&wire).expect("data point serializes")
}

pub fn parse_data_point(line: &str) -> Result<DataPoint, RecordError> {
    let wire: WirePoint = serde_json::from_str(line)?;
    let ts = |s: &str| parse_iso(s).ok_or_else(|| RecordError::Timestamp(s.to_owned()));
    let start_time = ts(&wire.start_time)?;
    let end_time = wire.end_time.as_deref().map(ts).transpose()?;
    let payload = Payload::from_json(wire.format.kind(), wire.body)?;
    Ok(DataPoint {
        header: DataPointHeader {
            study_id: wire.study_id,
            user_id: wire.user_id,
            format: wire.format.clone(),
            start_time,
            end_time,
            device_role: wire.device_role,
        },
        body: Datum::with_format(wire.format, payload),
    })
}
