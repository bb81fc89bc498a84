//! Twin-experiment harness: truth, observations, assimilation, skill, sweeps.

pub mod assimilate;
pub mod calibrate;
pub mod config;
pub mod manifest;
pub mod sweep;
pub mod truth;

pub use assimilate::{run_assimilation, run_control, AssimilationRun, ControlRun, SkillReport};
pub use calibrate::{amplitude_scale, calibrate, CalibrationReport};
pub use config::RunConfig;
pub use sweep::{sweep, SweepRow};
pub use truth::{generate_observations, run_truth, OceanSetup, TruthRun};
