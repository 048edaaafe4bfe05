//! Data-driven tuning of fixed-structure PID controllers.
//!
//! The loop is simulated against a surrogate plant; the tuner itself only
//! sees closed-loop records, as it would on hardware.

pub mod controller;
pub mod exec;
pub mod filter;
pub mod ift_engine;
pub mod maglev;
pub mod plant_sim;
pub mod trajectory;

pub use controller::{ControllerBasis, ParamVector, PidGains};
pub use exec::Execution;
pub use filter::LinearFilter;
pub use ift_engine::{optimize, CostWeights, IftError, OptimizeConfig, Scenario};
pub use plant_sim::{ExperimentRecord, NoiseSpec, PlantModel};
pub use trajectory::{MotionProfile, ProfileBounds};
