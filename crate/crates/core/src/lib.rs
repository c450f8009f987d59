pub mod cli;
pub mod config;
pub mod context;
pub mod corpus;
pub mod encode;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod nn;
pub mod senti;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
