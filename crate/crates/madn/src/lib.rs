//! File formats, dataset generation, training runs, evaluation reports,
//! plots and the `madn` command line, on top of [`madn_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod io;
pub mod plot;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
