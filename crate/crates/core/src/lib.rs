pub mod cli;
pub mod config;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod oracle;
pub mod regressor;
pub mod simulator;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
