pub mod autodiff;
pub mod cli;
pub mod encoders;
pub mod error;
pub mod io;
pub mod metrics;
pub mod network;
pub mod ntk;
pub mod operators;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
