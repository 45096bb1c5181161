//! Logical synchronization of open machines.
//!
//! An open machine is a computing node stepped by an adjustable clock whose
//! readings are written as a cycle count plus an in-cycle phase. Machines
//! exchange signals over channels; a channel is logically synchronized when
//! every arrival phase stays inside the receiver's writing window.
//!
//! The crate is organised bottom-up:
//!
//! - [`spacetime`]: static metrics (flat and first-order Fermi normal), proper
//!   rates and coordinate light delays from a null-path shooting solver.
//! - [`machine`]: clocks, rate schedules and the signal simulator.
//! - [`channel`]: channels, echo counts, repeating structure and occurrence
//!   graphs.
//! - [`adjustment`]: monotone clock adjustments and the channel-preserving
//!   pairs that slide lacings.
//! - [`arrange`]: constructive solvers for two-machine lacings, tetrahedra,
//!   five-machine clusters, the curvature phase and frozen arrangements.
//! - [`steer`]: drifting oscillators, delayed feedback steering and curvature
//!   re-estimation.
//! - [`shell`]: scenario files and the command runner behind the `logsync`
//!   binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjustment;
pub mod arrange;
pub mod channel;
pub mod machine;
pub mod shell;
pub mod spacetime;
pub mod steer;

pub use machine::{ClockReading, MachineId, OpenMachine};
pub use spacetime::{Metric, PhysicalConstants, Vec3};
