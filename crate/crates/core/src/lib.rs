pub mod analytics;
pub mod config;
pub mod detector;
pub mod engine;
pub mod error;
pub mod fiber;
pub mod grid;
pub mod sweep;
pub mod units;

pub use error::{Error, Result};
