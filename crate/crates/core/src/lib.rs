pub mod bench;
pub mod config;
pub mod diffcore;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod operator;
pub mod physics;
pub mod registry;
pub mod sampling;
pub mod trainer;

pub use error::{Error, Result};
