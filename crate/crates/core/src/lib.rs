pub mod attacks;
pub mod cli;
pub mod detector;
pub mod error;
pub mod optics;
pub mod protocol;
pub mod signal;
pub mod stats;
pub mod tgi;

pub use error::{Error, Result};
