//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use mobsense_core::sinks::DataEndPoint;
use mobsense_core::{
    DataPoint, Datum, FormatKey, Measure, MemoryStore, Payload, Registries, SimulatedDevice, StudyController,
    StudyProtocol, Task, Trigger, VirtualClock,
};

pub const START: i64 = 1_577_836_800_000;

/// One immediate task sampling each `(type, frequency_ms)` pair.
pub fn protocol(measures: &[(&str, u64)], endpoint: DataEndPoint) -> StudyProtocol {
    let measures = measures
        .iter()
        .map(|(kind, f)| Measure::new(FormatKey::carp(kind)).with_frequency(*f))
        .collect();
    StudyProtocol::new("bench", "bench-user", endpoint).add_trigger_task(Trigger::immediate(), Task::new("all", measures))
}

/// A started controller over a virtual clock writing into a memory store.
pub fn running_controller(p: StudyProtocol) -> (StudyController, MemoryStore) {
    let store = MemoryStore::new();
    let registries = Registries::with_builtin(store.clone());
    let clock = VirtualClock::new(START);
    let mut c = StudyController::new(p, &registries, clock.shared(), Arc::new(SimulatedDevice::new(42)), ".")
        .expect("built-in endpoint");
    c.initialize().expect("built-in probes");
    c.start().expect("fresh controller");
    (c, store)
}

pub fn sample_points(n: usize) -> Vec<DataPoint> {
    (0..n)
        .map(|i| {
            DataPoint::new(
                "bench",
                "bench-user",
                "phone",
                START + i as i64 * 20,
                Datum::carp(Payload::Accelerometer {
                    x: i as f64 * 0.01,
                    y: -0.2,
                    z: 9.81,
                }),
            )
        })
        .collect()
}
