//! Time sources. Everything that schedules goes through a [`Clock`] so the
//! same runtime can execute against wall time or a simulated timeline.

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

/// Milliseconds since the Unix epoch, UTC.
pub type EpochMs = i64;

pub const MS_PER_HOUR: i64 = 3_600_000;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> EpochMs;

    /// Block (or jump) until `t`. Returns immediately if `t` is not in the future.
    fn sleep_until(&self, t: EpochMs);

    fn is_virtual(&self) -> bool;
}

pub type SharedClock = Arc<dyn Clock>;

/// Deterministic simulated clock. Time only moves when someone calls
/// [`VirtualClock::advance_to`] or sleeps on it.
#[derive(Debug, Clone)]
pub struct VirtualClock {
    now: Arc<AtomicI64>,
}

impl VirtualClock {
    pub fn new(start: EpochMs) -> Self {
        Self {
            now: Arc::new(AtomicI64::new(start)),
        }
    }

    /// Moves time forward to `t`. Never moves backwards.
    pub fn advance_to(&self, t: EpochMs) {
        self.now.fetch_max(t, Ordering::AcqRel);
    }

    pub fn advance_by(&self, ms: i64) {
        self.now.fetch_add(ms.max(0), Ordering::AcqRel);
    }

    pub fn shared(&self) -> SharedClock {
        Arc::new(self.clone())
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> EpochMs {
        self.now.load(Ordering::Acquire)
    }

    fn sleep_until(&self, t: EpochMs) {
        self.advance_to(t);
    }

    fn is_virtual(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WallClock;

impl Clock for WallClock {
    fn now_ms(&self) -> EpochMs {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or(0)
    }

    fn sleep_until(&self, t: EpochMs) {
        let now = self.now_ms();
        if t > now {
            std::thread::sleep(Duration::from_millis((t - now) as u64));
        }
    }

    fn is_virtual(&self) -> bool {
        false
    }
}

/// Renders epoch milliseconds as `YYYY-MM-DDTHH:MM:SS.sssZ`.
pub fn format_iso(t: EpochMs) -> String {
    match chrono::DateTime::from_timestamp_millis(t) {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string(),
        None => t.to_string(),
    }
}

/// Parses an RFC 3339 / ISO-8601 instant into epoch milliseconds.
pub fn parse_iso(s: &str) -> Option<EpochMs> {
    chrono::DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|dt| dt.timestamp_millis())
}
