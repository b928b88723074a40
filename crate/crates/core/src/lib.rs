//! Discrete-event simulator of a hybrid indoor WLAN: a 2.4 GHz control
//! plane with prioritized CSMA/CA and a sectorized 60 GHz data plane with
//! one picocell per room.
//!
//! Time is integer nanoseconds ([`sim::SimTime`]) and every random draw
//! comes from a per-node, per-purpose stream, so a run is a pure function
//! of its scenario and seed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamtrack;
pub mod controller;
pub mod discovery;
pub mod floorplan;
pub mod mac_control;
pub mod mac_mmwave;
pub mod metrics;
pub mod mobility;
pub mod propagation;
pub mod scenario;
pub mod sim;
