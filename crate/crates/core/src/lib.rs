//! Seedable Monte Carlo simulation of parcel carrier selection across
//! supplier and re-seller e-commerce networks.
//!
//! The pipeline per replication is: synthesize clients, generate orders,
//! rate-shop every order against the offered carriers, let each client
//! choose a quote or abandon, then tally. [`scenario::run_suite`] runs many
//! scenarios and replications in parallel with results that do not depend on
//! the thread count.

pub mod choice;
pub mod cli;
pub mod config;
pub mod coverage;
pub mod dist;
pub mod error;
pub mod network;
pub mod orders;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod tariff;

pub use config::{load_config, Config};
pub use error::{Result, SimError};
pub use scenario::{run_scenario, run_suite, Scenario, ScenarioResult, Simulation};
