//! Circular geofences with enter/dwell/exit detection.

use super::datum::GeofenceEvent;
use crate::clock::EpochMs;

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Great-circle distance in metres (haversine).
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = (lat2 - lat1).to_radians();
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().atan2((1.0 - a).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geofence {
    pub id: String,
    pub center_lat: f64,
    pub center_lon: f64,
    pub radius_m: f64,
    pub dwell_ms: i64,
}

impl Geofence {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        haversine_m(self.center_lat, self.center_lon, lat, lon) <= self.radius_m
    }
}

/// Tracks one fence over a location stream. The initial state is outside, so a
/// first fix inside the fence counts as an entry.
#[derive(Debug, Clone)]
pub struct GeofenceDetector {
    fence: Geofence,
    entered_at: Option<EpochMs>,
    dwell_reported: bool,
}

impl GeofenceDetector {
    pub fn new(fence: Geofence) -> Self {
        assert!(fence.radius_m > 0.0, "geofence radius must be positive");
        Self {
            fence,
            entered_at: None,
            dwell_reported: false,
        }
    }

    pub fn fence(&self) -> &Geofence {
        &self.fence
    }

    pub fn is_inside(&self) -> bool {
        self.entered_at.is_some()
    }

    /// Feeds one location fix; returns the events it produces (at most two:
    /// an entry is never reported together with a dwell on the same fix unless
    /// `dwell_ms` is zero).
    pub fn update(&mut self, t: EpochMs, lat: f64, lon: f64) -> Vec<GeofenceEvent> {
        let mut events = Vec::new();
        let inside = self.fence.contains(lat, lon);
        match (self.entered_at, inside) {
            (None, true) => {
                self.entered_at = Some(t);
                self.dwell_reported = false;
                events.push(GeofenceEvent::Enter);
            }
            (Some(_), false) => {
                self.entered_at = None;
                events.push(GeofenceEvent::Exit);
            }
            _ => {}
        }
        if let Some(since) = self.entered_at {
            if !self.dwell_reported && t - since >= self.fence.dwell_ms {
                self.dwell_reported = true;
                events.push(GeofenceEvent::Dwell);
            }
        }
        events
    }
}

/// Runs a fresh detector over a whole `(t, lat, lon)` stream.
pub fn geofence_evaluate(
    fence: &Geofence,
    stream: impl IntoIterator<Item = (EpochMs, f64, f64)>,
) -> Vec<(EpochMs, GeofenceEvent)> {
    let mut detector = GeofenceDetector::new(fence.clone());
    stream
        .into_iter()
        .flat_map(|(t, lat, lon)| {
            detector
                .update(t, lat, lon)
                .into_iter()
                .map(move |e| (t, e))
                .collect::<Vec<_>>()
        })
        .collect()
}
