//! Study controller: owns the probes, trigger executors and data manager of
//! one running study, and drives them from an injected clock.

mod controller;
mod trigger;

pub use controller::{
    adaptation_csv, AdaptationEvent, ControllerState, EmissionCounts, Registries, RuntimeError,
    StudyController,
};
pub use trigger::{next_fire, TriggerExecutor};
