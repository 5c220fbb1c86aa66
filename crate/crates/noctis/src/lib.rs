//! Descriptor containers, result files, synthetic benchmarks and the
//! `noctis` command line on top of [`noctis_core`].

pub mod cli;
pub mod error;
pub mod pipeline;
pub mod results;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
