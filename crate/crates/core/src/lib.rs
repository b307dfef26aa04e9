//! Host-side runtime for declarative mobile-sensing studies.
//!
//! A [`StudyProtocol`] names what to sample, when, and where the data goes.
//! The [`StudyController`] resolves probes from registered sampling packages,
//! runs them against an injected [`Clock`], pushes every data point through
//! privacy and format transformers, and hands it to a data manager.

pub mod clock;
pub mod probes;
pub mod protocol;
pub mod runtime;
pub mod sinks;
pub mod transform;

pub use clock::{Clock, EpochMs, SharedClock, VirtualClock, WallClock};
pub use probes::{DataPoint, Datum, PackageRegistry, Payload, Probe, SimulatedDevice};
pub use protocol::{
    parse_protocol, serialize_protocol, validate_protocol, FormatKey, Measure, PowerTier,
    SamplingSchema, StudyProtocol, Task, Trigger,
};
pub use runtime::{AdaptationEvent, ControllerState, Registries, RuntimeError, StudyController};
pub use sinks::{DataEndPoint, DataManager, DataManagerRegistry, MemoryStore};
pub use transform::{hash_value, DatumTransformer, TransformerRegistry};
