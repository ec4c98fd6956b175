pub mod config;
pub mod defaults;
pub mod envs;
pub mod error;
pub mod harness;
pub mod policy;
pub mod rng;
pub mod selftest;
pub mod robust;
pub mod wasserstein;
pub mod zo;

pub use error::{Error, Result};
