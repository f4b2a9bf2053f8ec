pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod explain;
pub mod model;
pub mod review;
pub mod rules;
pub mod store;
pub mod subgraph;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
