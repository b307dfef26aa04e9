use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;

use tracing::debug;

use super::trigger::TriggerExecutor;
use crate::clock::{EpochMs, SharedClock, MS_PER_HOUR};
use crate::probes::{
    DataPoint, Datum, PackageRegistry, Payload, Probe, ProbeError, ProbeKind, ProbeState,
    SimulatedDevice,
};
use crate::protocol::{FormatKey, Measure, PowerTier, StudyProtocol, Trigger, CARP_NAMESPACE};
use crate::sinks::{DataManager, DataManagerRegistry, MemoryStore, SinkContext, SinkError};
use crate::transform::TransformerRegistry;

/// The three registries a controller resolves against.
#[derive(Debug, Clone)]
pub struct Registries {
    pub packages: PackageRegistry,
    pub transformers: TransformerRegistry,
    pub data_managers: DataManagerRegistry,
}

impl Registries {
    /// Built-in packages, transformer schemas and data managers, with every
    /// package's privacy functions registered. Memory endpoints write to
    /// `store`.
    pub fn with_builtin(store: MemoryStore) -> Self {
        let packages = PackageRegistry::with_builtin();
        let mut transformers = TransformerRegistry::with_builtin();
        for t in packages.privacy_functions() {
            transformers
                .register_privacy(t)
                .expect("built-in privacy functions are disjoint");
        }
        Self {
            packages,
            transformers,
            data_managers: DataManagerRegistry::with_builtin(store),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerState {
    Created,
    Initialized,
    Running,
    Paused,
    Stopped,
}

impl fmt::Display for ControllerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("no data manager registered for endpoint kind '{0}'")]
    UnknownEndpoint(String),
    #[error("data format '{0}' has no transformer schema")]
    UnknownNamespace(String),
    #[error("cannot {action} a controller in state {from}")]
    IllegalTransition {
        from: ControllerState,
        action: &'static str,
    },
    #[error("probe for {measure}: {source}")]
    Probe {
        measure: FormatKey,
        #[source]
        source: Box<ProbeError>,
    },
    #[error("{component} data manager: {source}")]
    Sink {
        component: String,
        #[source]
        source: SinkError,
    },
    #[error("data points can only be emitted while running (state {0})")]
    NotRunning(ControllerState),
}

/// A power-tier change caused by a battery reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdaptationEvent {
    pub t_ms: EpochMs,
    pub level: u8,
    pub old_tier: PowerTier,
    pub new_tier: PowerTier,
}

/// `t_ms,level,old_tier,new_tier`, with times relative to `origin`.
pub fn adaptation_csv(events: &[AdaptationEvent], origin: EpochMs) -> String {
    let mut out = String::from("t_ms,level,old_tier,new_tier\n");
    for e in events {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.t_ms - origin,
            e.level,
            e.old_tier,
            e.new_tier
        ));
    }
    out
}

/// Published points per rendered format key and hour bucket since start.
pub type EmissionCounts = BTreeMap<(String, i64), u64>;

struct ProbeSlot {
    probe: Probe,
    /// The measure as configured by the protocol; tiers scale from this.
    base: Measure,
    task_active: bool,
}

pub struct StudyController {
    protocol: StudyProtocol,
    clock: SharedClock,
    device: Arc<SimulatedDevice>,
    packages: PackageRegistry,
    transformers: TransformerRegistry,
    data_manager: Box<dyn DataManager>,
    executors: Vec<TriggerExecutor>,
    probes: Vec<ProbeSlot>,
    state: ControllerState,
    power_state: PowerTier,
    adaptations: Vec<AdaptationEvent>,
    observers: Vec<Sender<DataPoint>>,
    started_at: Option<EpochMs>,
    counts: EmissionCounts,
    published: u64,
}

impl fmt::Debug for StudyController {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StudyController")
            .field("study", &self.protocol.id)
            .field("state", &self.state)
            .field("power_state", &self.power_state)
            .field("probes", &self.probes.len())
            .finish_non_exhaustive()
    }
}

impl StudyController {
    /// Resolves the data manager and target format schema. Probes are built
    /// by [`StudyController::initialize`].
    pub fn new(
        protocol: StudyProtocol,
        registries: &Registries,
        clock: SharedClock,
        device: Arc<SimulatedDevice>,
        out_dir: impl Into<PathBuf>,
    ) -> Result<Self, RuntimeError> {
        let kind = protocol.data_end_point.kind().to_owned();
        let ctx = SinkContext {
            out_dir: out_dir.into(),
            clock: clock.clone(),
        };
        let data_manager = registries
            .data_managers
            .create(&kind, &ctx)
            .map_err(|_| RuntimeError::UnknownEndpoint(kind.clone()))?;
        if protocol.data_format != CARP_NAMESPACE
            && !registries.transformers.has_namespace(&protocol.data_format)
        {
            return Err(RuntimeError::UnknownNamespace(protocol.data_format.clone()));
        }
        Ok(Self {
            clock,
            device,
            packages: registries.packages.clone(),
            transformers: registries.transformers.clone(),
            data_manager,
            executors: Vec::new(),
            probes: Vec::new(),
            state: ControllerState::Created,
            power_state: PowerTier::Normal,
            adaptations: Vec::new(),
            observers: Vec::new(),
            started_at: None,
            counts: EmissionCounts::new(),
            published: 0,
            protocol,
        })
    }

    pub fn protocol(&self) -> &StudyProtocol {
        &self.protocol
    }

    pub fn state(&self) -> ControllerState {
        self.state
    }

    pub fn power_state(&self) -> PowerTier {
        self.power_state
    }

    pub fn now(&self) -> EpochMs {
        self.clock.now_ms()
    }

    pub fn started_at(&self) -> Option<EpochMs> {
        self.started_at
    }

    pub fn adaptations(&self) -> &[AdaptationEvent] {
        &self.adaptations
    }

    pub fn emission_counts(&self) -> &EmissionCounts {
        &self.counts
    }

    pub fn published(&self) -> u64 {
        self.published
    }

    pub fn executors(&self) -> &[TriggerExecutor] {
        &self.executors
    }

    pub fn probes(&self) -> impl Iterator<Item = &Probe> {
        self.probes.iter().map(|s| &s.probe)
    }

    pub fn data_manager(&self) -> &dyn DataManager {
        self.data_manager.as_ref()
    }

    /// A new observer of the published stream. Delivery is in emission order
    /// and never blocks the runtime.
    pub fn subscribe(&mut self) -> Receiver<DataPoint> {
        let (tx, rx) = channel();
        self.observers.push(tx);
        rx
    }

    fn illegal(&self, action: &'static str) -> RuntimeError {
        RuntimeError::IllegalTransition {
            from: self.state,
            action,
        }
    }

    /// Creates and initializes every probe, then the data manager.
    pub fn initialize(&mut self) -> Result<(), RuntimeError> {
        if self.state != ControllerState::Created {
            return Err(self.illegal("initialize"));
        }
        let mut probes = Vec::new();
        let mut executors = Vec::new();
        for tt in &self.protocol.trigger_tasks {
            let mut ids = Vec::new();
            for m in &tt.task.measures {
                let wrap = |source| RuntimeError::Probe {
                    measure: m.kind.clone(),
                    source: Box::new(source),
                };
                let mut probe = self.packages.create_probe(m, &self.device).map_err(wrap)?;
                probe.initialize().map_err(wrap)?;
                ids.push(probes.len());
                probes.push(ProbeSlot {
                    base: probe.measure().clone(),
                    probe,
                    task_active: false,
                });
            }
            executors.push(TriggerExecutor::new(tt.trigger.clone(), tt.task.name.clone(), ids));
        }
        self.data_manager
            .initialize(&self.protocol.data_end_point, &self.protocol)
            .map_err(|source| RuntimeError::Sink {
                component: self.data_manager.kind().to_owned(),
                source,
            })?;
        self.probes = probes;
        self.executors = executors;
        self.state = ControllerState::Initialized;
        Ok(())
    }

    pub fn start(&mut self) -> Result<(), RuntimeError> {
        if self.state != ControllerState::Initialized {
            return Err(self.illegal("start"));
        }
        let now = self.now();
        self.started_at = Some(now);
        self.state = ControllerState::Running;
        for ex in &mut self.executors {
            ex.arm(now);
        }
        Ok(())
    }

    pub fn pause(&mut self) -> Result<(), RuntimeError> {
        if self.state != ControllerState::Running {
            return Err(self.illegal("pause"));
        }
        self.state = ControllerState::Paused;
        for ex in &mut self.executors {
            ex.disarm();
        }
        for i in 0..self.probes.len() {
            self.reconcile(i)?;
        }
        Ok(())
    }

    pub fn resume(&mut self) -> Result<(), RuntimeError> {
        if self.state != ControllerState::Paused {
            return Err(self.illegal("resume"));
        }
        let now = self.now();
        self.state = ControllerState::Running;
        for ex in &mut self.executors {
            ex.arm(now);
        }
        for i in 0..self.probes.len() {
            self.reconcile(i)?;
        }
        Ok(())
    }

    /// Terminal. Stops every probe and closes (flushing) the data manager.
    pub fn stop(&mut self) -> Result<(), RuntimeError> {
        if self.state == ControllerState::Stopped {
            return Err(self.illegal("stop"));
        }
        self.state = ControllerState::Stopped;
        for ex in &mut self.executors {
            ex.disarm();
        }
        for slot in &mut self.probes {
            slot.probe.stop().map_err(|source| RuntimeError::Probe {
                measure: slot.base.kind.clone(),
                source: Box::new(source),
            })?;
        }
        self.data_manager.close().map_err(|source| RuntimeError::Sink {
            component: self.data_manager.kind().to_owned(),
            source,
        })
    }

    /// Brings probe `i` in line with controller state, task activation and
    /// its measure's `enabled` flag.
    fn reconcile(&mut self, i: usize) -> Result<(), RuntimeError> {
        let now = self.now();
        let running = self.state == ControllerState::Running;
        let slot = &mut self.probes[i];
        let want = running && slot.task_active && slot.probe.measure().enabled;
        let result = match (want, slot.probe.state()) {
            (true, ProbeState::Initialized | ProbeState::Paused) => slot.probe.resume(now),
            (false, ProbeState::Resumed) => slot.probe.pause(),
            _ => Ok(()),
        };
        result.map_err(|source| RuntimeError::Probe {
            measure: slot.base.kind.clone(),
            source: Box::new(source),
        })
    }

    fn fire_executor(&mut self, idx: usize, now: EpochMs) -> Result<(), RuntimeError> {
        self.executors[idx].fire(now);
        debug!(task = %self.executors[idx].task_name, now, "trigger fired");
        let ids = self.executors[idx].probes.clone();
        for i in ids {
            let slot = &mut self.probes[i];
            if slot.task_active && slot.probe.kind() == ProbeKind::OneShot {
                slot.probe.trigger_once(now);
            }
            slot.task_active = true;
            self.reconcile(i)?;
        }
        Ok(())
    }

    /// Earliest pending piece of work: a trigger, a probe reading or a data
    /// manager retry.
    fn next_event(&self) -> Option<EpochMs> {
        let mut next = self.data_manager.next_wakeup();
        if self.state == ControllerState::Running {
            let times = self
                .executors
                .iter()
                .filter_map(|e| e.cursor())
                .chain(self.probes.iter().filter_map(|s| s.probe.next_due()));
            for t in times {
                next = Some(next.map_or(t, |n: EpochMs| n.min(t)));
            }
        }
        next
    }

    /// Processes every event strictly before `end`, then moves the clock to
    /// `end`.
    pub fn run_until(&mut self, end: EpochMs) -> Result<(), RuntimeError> {
        while let Some(t) = self.next_event().filter(|t| *t < end) {
            self.clock.sleep_until(t);
            let now = t.max(self.now());
            self.step(now)?;
        }
        self.clock.sleep_until(end);
        Ok(())
    }

    pub fn run_for(&mut self, duration_ms: i64) -> Result<(), RuntimeError> {
        let end = self.now() + duration_ms;
        self.run_until(end)
    }

    fn step(&mut self, now: EpochMs) -> Result<(), RuntimeError> {
        if self.state == ControllerState::Running {
            for idx in 0..self.executors.len() {
                if self.executors[idx].cursor().is_some_and(|c| c <= now) {
                    self.fire_executor(idx, now)?;
                }
            }
            for i in 0..self.probes.len() {
                if self.state != ControllerState::Running {
                    break;
                }
                if !self.probes[i].probe.next_due().is_some_and(|d| d <= now) {
                    continue;
                }
                let slot = &mut self.probes[i];
                let samples = slot.probe.poll(now).map_err(|source| RuntimeError::Probe {
                    measure: slot.base.kind.clone(),
                    source: Box::new(source),
                })?;
                let role = slot.probe.device_role().to_owned();
                for s in samples {
                    let raw = DataPoint::new(
                        &self.protocol.id,
                        &self.protocol.user_id,
                        &role,
                        s.time,
                        s.datum,
                    );
                    self.emit(raw)?;
                }
            }
        }
        self.data_manager.poll(now).map_err(|source| RuntimeError::Sink {
            component: self.data_manager.kind().to_owned(),
            source,
        })
    }

    /// Runs one raw point through privacy, format transformation, observers
    /// and the data manager, then lets the runtime react to it.
    pub fn emit(&mut self, raw: DataPoint) -> Result<(), RuntimeError> {
        if self.state != ControllerState::Running {
            return Err(RuntimeError::NotRunning(self.state));
        }
        let trigger_view = raw.body.clone();
        let mut point = raw;
        let mut body = point.body.clone();
        if self.protocol.privacy_enabled {
            body = self.transformers.privacy_apply(body);
        }
        let body = match self.transformers.transform(body, &self.protocol.data_format) {
            Ok(d) => d,
            Err(e) => Datum::error(e.to_string()),
        };
        point.replace_body(body);
        self.publish(point)?;
        self.react(&trigger_view)
    }

    fn publish(&mut self, point: DataPoint) -> Result<(), RuntimeError> {
        let origin = self.started_at.unwrap_or(point.header.start_time);
        let bucket = (point.header.start_time - origin).div_euclid(MS_PER_HOUR);
        *self
            .counts
            .entry((point.header.format.to_string(), bucket))
            .or_insert(0) += 1;
        self.published += 1;
        self.observers.retain(|tx| tx.send(point.clone()).is_ok());
        self.data_manager
            .on_data_point(&point)
            .map_err(|source| RuntimeError::Sink {
                component: self.data_manager.kind().to_owned(),
                source,
            })
    }

    /// Battery readings drive adaptation; any reading may fire sampling-event
    /// triggers.
    fn react(&mut self, datum: &Datum) -> Result<(), RuntimeError> {
        if let Payload::Battery { level, .. } = datum.payload {
            self.on_battery(level)?;
        }
        let now = self.now();
        let matching: Vec<usize> = self
            .executors
            .iter()
            .enumerate()
            .filter(|(_, ex)| match &ex.trigger {
                Trigger::SamplingEvent {
                    source_measure_type,
                    condition,
                } => {
                    *source_measure_type == datum.format
                        && condition.as_ref().is_none_or(|c| {
                            datum.field_string(&c.field_name).as_deref() == Some(c.expected_value.as_str())
                        })
                }
                _ => false,
            })
            .map(|(i, _)| i)
            .collect();
        for idx in matching {
            self.fire_executor(idx, now)?;
        }
        Ok(())
    }

    /// Maps a battery level to a power tier and, on a change, rescales every
    /// probe's measure for the new tier. The battery probe itself never drops
    /// below the Minimum tier so recharging stays observable.
    pub fn on_battery(&mut self, level: u8) -> Result<PowerTier, RuntimeError> {
        let tier = PowerTier::for_battery_level(level.min(100));
        if tier == self.power_state {
            return Ok(tier);
        }
        let event = AdaptationEvent {
            t_ms: self.now(),
            level,
            old_tier: self.power_state,
            new_tier: tier,
        };
        debug!(?event, "power tier change");
        self.adaptations.push(event);
        self.power_state = tier;
        for i in 0..self.probes.len() {
            let slot = &mut self.probes[i];
            let effective = if tier == PowerTier::None && slot.base.kind.kind() == "battery" {
                PowerTier::Minimum
            } else {
                tier
            };
            let adapted = effective.scale(&slot.base);
            slot.probe
                .set_measure(adapted)
                .map_err(|source| RuntimeError::Probe {
                    measure: slot.base.kind.clone(),
                    source: Box::new(source),
                })?;
            self.reconcile(i)?;
        }
        Ok(tier)
    }
}
