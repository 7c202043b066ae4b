//! Model-free dual-loop adaptive tracking control for a flexible-wing
//! aircraft model: an online actor-critic tracker, an optional actor-critic
//! optimizer loop on top of it, and a batch policy-iteration baseline,
//! together with the simulation, metrics, and reporting plumbing used to
//! compare them.

pub mod actor;
pub mod config;
pub mod critic;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod plant;
pub mod report;
pub mod trace;

pub use error::{Error, Result};
