pub mod cost;
pub mod engine;
pub mod error;
pub mod gamma;
pub mod harness;
pub mod quadrature;
pub mod rng;
pub mod scheduler;
pub mod system;
pub mod tasks;

pub use error::{Error, Result};
