pub mod cli;
pub mod dictionary;
pub mod embedding;
pub mod error;
pub mod features;
pub mod forest;
pub mod fuzzy;
pub mod harness;
pub mod rank;
pub mod rng;
pub mod service;
pub mod stats;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};
