//! Desk-scale simulator for tiered sensor-node intelligence.
//!
//! A body-worn accelerometer node can forward every sample (tier 1), only
//! samples that show movement (tier 2), only fall alarms (tier 3), or the
//! verdicts of an on-node neural network. This crate generates labeled
//! traces, runs the node policies over them, prices each run with an affine
//! energy model, and pushes the resulting traffic through a base station,
//! an ingestion endpoint and a schema-checked store.
//!
//! Module map:
//!
//! - [`trace`]: synthetic accelerometer traces and their CSV format
//! - [`node`]: tier policies and the per-run [`NodeLog`]
//! - [`energy`]: energy accounting, calibration and tier comparison
//! - [`classify`]: perceptron, ADALINE and backpropagation networks
//! - [`station`]: radio frames, line protocol, ingestion and notifications
//! - [`store`]: file-backed entity store with referential integrity
//! - [`harness`]: multi-run experiments, reports and verification

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod energy;
pub mod harness;
pub mod node;
pub mod station;
pub mod store;
pub mod trace;

pub use energy::{account, calibrate, compare, CalibrationTargets, EnergyParams, EnergyReport};
pub use node::{magnitude_sq, run_node, Decision, NodeConfig, NodeLog, Tier};
pub use trace::{generate_trace, load_trace, write_trace, AccelSample, Activity, Trace, TraceSpec};
