pub mod encoding;
pub mod error;
pub mod exact;
pub mod flow;
pub mod generator;
pub mod harness;
pub mod instance;
pub mod nn;
pub mod pipeline;

pub use error::{Error, Result};
