//! Hierarchical federated learning with differential privacy injected at the
//! lowest trusted tier: trusted edge servers noise their subnet's aggregate,
//! devices behind untrusted servers noise their own transmissions.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`, which every acceptance tolerance assumes.

pub mod analysis;
pub mod engine;
pub mod harness;
pub mod model;
pub mod privacy;
pub mod rng;
pub mod scalar;
pub mod tasks;
pub mod topology;

pub use analysis::{
    bound_constants, check_dispersion_bounds, measure_dispersion, theorem_report, BoundConstants, BoundInputs,
    DispersionSample, FStar, TheoremReport,
};
pub use engine::{make_schedule, run, DpMode, EngineError, Init, RunOptions, Schedule, StepSizeSchedule, TrainState};
pub use model::ModelVector;
pub use privacy::{calibrate, noise_std, sensitivities, validate_budget, NoisePlan, PrivacyLedger, PrivacySpec};
pub use rng::{SeedBook, Stream};
pub use scalar::Scalar;
pub use tasks::{TaskInstance, TaskKind, TaskProperties};
pub use topology::{build_topology, Topology, TrustPolicy};

pub type Model = ModelVector<f64>;
pub type Task = TaskInstance<f64>;
pub type Trace = engine::TrainTrace<f64>;
pub type State = TrainState<f64>;
pub type Properties = TaskProperties<f64>;
