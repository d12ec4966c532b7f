//! Maritime medical-evacuation planning.
//!
//! - [`geo`]: spherical-Earth distances, bearings and interpolation.
//! - [`world`]: aircraft, watercraft, facilities, requests and world snapshots.
//! - [`smdp`]: the event-driven decision process over snapshots.
//! - [`planner`]: Monte Carlo tree search and the greedy baseline.
//! - [`zones`]: opportunity zones, blackout windows, transfer chains and exchange-ship placement.
//! - [`simkit`]: episode simulation, event logs, metrics and replay checks.
//! - [`scenario`]: scenario documents and the bundled scenarios.
//! - [`opsvc`]: the operations service behind the planning console.

pub mod cli;
pub mod geo;
pub mod opsvc;
pub mod planner;
pub mod scenario;
pub mod simkit;
pub mod smdp;
pub mod world;
pub mod zones;
