//! Energy profiling of solution programs.
//!
//! The pipeline: measure each solution's CPU time and package energy over
//! repeated runs, trim and aggregate, optionally remove the machine's idle
//! baseline, fit an origin-constrained energy profile `c = a·t` per problem,
//! flag solutions whose energy departs from the profile, and classify unknown
//! solution sets by their profile slope.

pub mod backend;
pub mod calibration;
pub mod classifier;
#[cfg(unix)]
pub mod cli;
pub mod io;
pub mod model;
pub mod orchestrator;
pub mod pipeline;
pub mod profile;
pub mod scenario;
