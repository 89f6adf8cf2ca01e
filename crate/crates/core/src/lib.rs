pub mod digest;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod network;
pub mod payoff;
pub mod rng;
pub mod scenario;
pub mod store;
pub mod sweep;

pub use error::{Error, Result};
