//! Adaptive practical prescribed-time dynamic surface control.
//!
//! Strict-feedback plants with time-varying parameters, uncertain control
//! gains and unmodeled dynamics are driven into a shrinking performance
//! funnel by a prescribed time `T`, after which a vanishing leakage term
//! lets the tracking error converge asymptotically.
//!
//! * [`perf_rate`]: funnel, rate gain and leakage schedules.
//! * [`plant`]: the plant class and the two built-in examples.
//! * [`controller`]: the recursive control law.
//! * [`sim`]: fixed-step RK4 closed-loop simulation and sweeps.
//! * [`metrics`]: summaries, residual bounds and inequality checkers.
//! * [`config`] / [`cli`]: scenario files and the command-line front end.

// `!(a < b)` is used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod controller;
pub mod error;
pub mod metrics;
pub mod output;
pub mod perf_rate;
pub mod plant;
pub mod sim;

pub use controller::{Controller, ControllerGains, ControllerState};
pub use error::{ControlError, MetricsError, ParamError};
pub use perf_rate::{EpsSchedule, GainSchedule, PerfRateFn, PerfRateParams};
pub use plant::{builtin_example1, builtin_example2, PlantModel, ReferenceSignal};
pub use sim::{run, sweep, RunOutcome, RunStatus, Scenario, SimConfig, SweepParam};
