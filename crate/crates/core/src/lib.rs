pub mod alignment;
pub mod analysis;
pub mod config;
pub mod data;
pub mod ensemble;
pub mod evaluation;
pub mod export;
pub mod error;
pub mod learner;
pub mod linalg;
pub mod manifold;
pub mod rng;

pub use error::{Error, Result};
