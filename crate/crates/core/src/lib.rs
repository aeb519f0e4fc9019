pub mod diagnostics;
pub mod error;
pub mod exact;
pub mod free_energy;
pub mod harness;
pub mod message_passing;
pub mod minimizer;
pub mod model;

pub use error::{Error, Result};
