//! Batched NDJSON upload with exponential backoff and a deadletter spill.

use std::any::Any;
use std::collections::VecDeque;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;

use tracing::warn;

use super::ndjson::serialize_data_point;
use super::{DataEndPoint, DataManager, SinkError};
use crate::clock::{EpochMs, SharedClock};
use crate::probes::DataPoint;
use crate::protocol::StudyProtocol;

pub const NDJSON_CONTENT_TYPE: &str = "application/x-ndjson";
pub const DEADLETTER_FILE: &str = "deadletter.ndjson";
pub const MAX_QUEUED_POINTS: usize = 100_000;
pub const BACKOFF_BASE_MS: i64 = 1_000;

/// Sends one request body. Returns the HTTP status, or an error string when
/// no response was received.
pub trait Transport: Send {
    fn post(&mut self, url: &str, content_type: &str, body: &[u8]) -> Result<u16, String>;
}

/// Blocking transport over `ureq`.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self {
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(30))
                .build(),
        }
    }
}

impl Transport for UreqTransport {
    fn post(&mut self, url: &str, content_type: &str, body: &[u8]) -> Result<u16, String> {
        match self
            .agent
            .post(url)
            .set("Content-Type", content_type)
            .send_bytes(body)
        {
            Ok(resp) => Ok(resp.status()),
            Err(ureq::Error::Status(code, _)) => Ok(code),
            Err(e) => Err(e.to_string()),
        }
    }
}

#[derive(Debug)]
struct InFlight {
    batch: Vec<DataPoint>,
    failures: u32,
    next_attempt: EpochMs,
}

/// Counters exposed for tests and run summaries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UploadStats {
    pub delivered: u64,
    pub deadlettered: u64,
    pub batches_sent: u64,
    /// Every backoff wait scheduled, in milliseconds, in order.
    pub backoff_waits: Vec<i64>,
}

pub struct HttpDataManager {
    url: String,
    batch_size: usize,
    retry_max: u32,
    clock: SharedClock,
    deadletter: PathBuf,
    transport: Box<dyn Transport>,
    queue: VecDeque<DataPoint>,
    in_flight: Option<InFlight>,
    stats: UploadStats,
    closed: bool,
}

impl HttpDataManager {
    pub fn new(out_dir: impl Into<PathBuf>, clock: SharedClock) -> Self {
        Self::with_transport(out_dir, clock, Box::<UreqTransport>::default())
    }

    pub fn with_transport(out_dir: impl Into<PathBuf>, clock: SharedClock, transport: Box<dyn Transport>) -> Self {
        Self {
            url: String::new(),
            batch_size: 1,
            retry_max: 0,
            clock,
            deadletter: out_dir.into().join(DEADLETTER_FILE),
            transport,
            queue: VecDeque::new(),
            in_flight: None,
            stats: UploadStats::default(),
            closed: false,
        }
    }

    pub fn stats(&self) -> &UploadStats {
        &self.stats
    }

    pub fn deadletter_path(&self) -> &PathBuf {
        &self.deadletter
    }

    pub fn pending(&self) -> usize {
        self.queue.len() + self.in_flight.as_ref().map_or(0, |f| f.batch.len())
    }

    fn spill(&mut self, points: &[DataPoint]) -> Result<(), SinkError> {
        if points.is_empty() {
            return Ok(());
        }
        if let Some(dir) = self.deadletter.parent() {
            std::fs::create_dir_all(dir).map_err(|e| SinkError::io(dir, e))?;
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.deadletter)
            .map_err(|e| SinkError::io(&self.deadletter, e))?;
        let mut buf = String::new();
        for p in points {
            buf.push_str(&serialize_data_point(p));
            buf.push('\n');
        }
        f.write_all(buf.as_bytes())
            .map_err(|e| SinkError::io(&self.deadletter, e))?;
        self.stats.deadlettered += points.len() as u64;
        Ok(())
    }

    /// Sends whatever is due at `now`. With `drain`, a partial batch is sent
    /// instead of waiting for it to fill.
    fn pump(&mut self, now: EpochMs, drain: bool) -> Result<(), SinkError> {
        loop {
            if self.in_flight.is_none() {
                let ready = self.queue.len() >= self.batch_size || (drain && !self.queue.is_empty());
                if !ready {
                    return Ok(());
                }
                let n = self.batch_size.min(self.queue.len());
                self.in_flight = Some(InFlight {
                    batch: self.queue.drain(..n).collect(),
                    failures: 0,
                    next_attempt: now,
                });
            }
            let flight = self.in_flight.as_mut().expect("set above");
            if flight.next_attempt > now {
                return Ok(());
            }
            let mut body = String::new();
            for p in &flight.batch {
                body.push_str(&serialize_data_point(p));
                body.push('\n');
            }
            self.stats.batches_sent += 1;
            let outcome = self
                .transport
                .post(&self.url, NDJSON_CONTENT_TYPE, body.as_bytes());
            match outcome {
                Ok(status) if (200..300).contains(&status) => {
                    let flight = self.in_flight.take().expect("in flight");
                    self.stats.delivered += flight.batch.len() as u64;
                }
                failure => {
                    flight.failures += 1;
                    if flight.failures > self.retry_max {
                        warn!(url = %self.url, ?failure, "upload retries exhausted, spilling batch");
                        let flight = self.in_flight.take().expect("in flight");
                        self.spill(&flight.batch)?;
                    } else {
                        let wait = BACKOFF_BASE_MS << (flight.failures - 1).min(30);
                        flight.next_attempt = now + wait;
                        self.stats.backoff_waits.push(wait);
                        return Ok(());
                    }
                }
            }
        }
    }

    /// Delivers or spills everything queued, sleeping on the clock between
    /// retries.
    fn drain(&mut self) -> Result<(), SinkError> {
        loop {
            let now = self.clock.now_ms();
            self.pump(now, true)?;
            match self.in_flight.as_ref().map(|f| f.next_attempt) {
                Some(t) => self.clock.sleep_until(t),
                None if self.queue.is_empty() => return Ok(()),
                None => {}
            }
        }
    }
}

impl DataManager for HttpDataManager {
    fn kind(&self) -> &str {
        "http"
    }

    fn initialize(&mut self, endpoint: &DataEndPoint, _protocol: &StudyProtocol) -> Result<(), SinkError> {
        match endpoint {
            DataEndPoint::Http {
                url,
                batch_size,
                retry_max,
            } => {
                self.url = url.clone();
                self.batch_size = (*batch_size).max(1);
                self.retry_max = *retry_max;
                Ok(())
            }
            other => Err(SinkError::EndpointMismatch {
                manager: "http".into(),
                endpoint: other.kind().to_owned(),
            }),
        }
    }

    fn on_data_point(&mut self, p: &DataPoint) -> Result<(), SinkError> {
        if self.closed {
            return Err(SinkError::Closed);
        }
        if self.queue.len() >= MAX_QUEUED_POINTS {
            warn!("upload queue full, spilling point to deadletter");
            self.spill(std::slice::from_ref(p))?;
        } else {
            self.queue.push_back(p.clone());
        }
        self.pump(self.clock.now_ms(), false)
    }

    fn next_wakeup(&self) -> Option<EpochMs> {
        self.in_flight.as_ref().map(|f| f.next_attempt)
    }

    fn poll(&mut self, now: EpochMs) -> Result<(), SinkError> {
        self.pump(now, false)
    }

    fn flush(&mut self) -> Result<(), SinkError> {
        self.drain()
    }

    fn close(&mut self) -> Result<(), SinkError> {
        if self.closed {
            return Ok(());
        }
        self.drain()?;
        self.closed = true;
        Ok(())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
