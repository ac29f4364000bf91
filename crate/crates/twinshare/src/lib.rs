//! Simulation and planning toolkit for lightweight model sharing among
//! resource-limited agents.
//!
//! A swarm of agents trains small onboard recognition models distilled from
//! a larger teacher, and periodically averages parameters with neighbors
//! over a communication graph. Whether that averaging converges depends on
//! the graph's Laplacian spectrum and the communication delay; whether the
//! delay stays within budget depends on channel bandwidth. This crate wires
//! those pieces together:
//!
//! - [`graph`]: topologies, Laplacian spectra, and delay budgets.
//! - [`consensus`]: delayed averaging dynamics (continuous and per-round).
//! - [`kd`]: distillation losses, gradients, and a desk-scale MLP family.
//! - [`netcalc`]: arrival/service curves, delay bounds, bandwidth sizing.
//! - [`dtsync`]: device/edge twin records and the synchronization protocol.
//! - [`planner`]: configuration search over model tier, sharing frequency,
//!   and topology degree.
//! - [`sim`]: end-to-end sharing experiments with metrics.
//!
//! The `examples/` directory contains one runnable walk-through per
//! capability; the `twinshare` binary exposes the same operations on files.

pub mod consensus;
pub mod dtsync;
pub mod graph;
pub mod kd;
pub mod netcalc;
pub mod planner;
pub mod sim;

pub use consensus::{ConsensusError, ConsensusState, ConvergenceReport};
pub use dtsync::{DeviceTwin, EdgeTwin, SyncPhase};
pub use graph::{generate_topology, DelayBudget, GraphError, Spectrum, Topology};
pub use kd::{KdConfig, MlpModel, StudentTier};
pub use netcalc::{ModelSpec, NetParams, NetcalcError};
pub use planner::{AccuracyTable, PlanResult, PlannerError, SharingConfig};
pub use sim::{MetricsLog, ScenarioConfig, SimError};
