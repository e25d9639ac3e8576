//! Synchronous nonlinear observer for GNSS- and magnetometer-aided
//! landmark-inertial SLAM, posed on `SE_{n+2}(3)` with an auxiliary state on
//! `SIM_{n+2}(3)`, together with a ground-truth simulator and run harness.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gains;
pub mod harness;
pub mod lie;
pub mod metrics;
pub mod observer;
pub mod selftest;
pub mod system;

pub use error::{Error, Result};
pub use gains::{check_gain_condition, GainCheck, P0Seeds, PBounds, PMatrix};
pub use harness::{run, RunConfig, RunOutput, Scenario, Simulation, Summary};
pub use lie::{
    ConstantMatrices, Mat3, Mat3xX, Rotation, SeElement, SeTangent, SimElement, SimTangent, Vec3,
};
pub use metrics::MetricsRow;
pub use observer::{observer_step, Gains, ObserverState, SensorCorrections, TangentCorrection};
pub use system::{GnssMode, GnssSchedule, ImuInput, MeasurementBundle, NoiseModel, SystemParams};
