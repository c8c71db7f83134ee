//! Round-based simulation and delay optimization of federated learning over a
//! UAV-served network of power-splitting SWIPT devices.
//!
//! Layers, bottom up: [`channel`] link budgets, [`energy`] per-round ledgers,
//! [`timing`] round delay, [`fl`] federated averaging, [`system`] one round's
//! physics for a geometry, [`optimizer`] power-splitting ratios and UAV
//! placement, [`scenario`] trials and Monte Carlo runs, [`cli`] the binary.

pub mod channel;
pub mod cli;
pub mod energy;
pub mod error;
pub mod fl;
pub mod geometry;
pub mod numeric;
pub mod optimizer;
pub mod rng;
pub mod scenario;
pub mod system;
pub mod timing;

pub use error::{Error, Result};
pub use scenario::{Scenario, ScenarioConfig};
