//! File formats, plots, the command-line front end and the experiment runner
//! built on top of `peer-core`.

pub mod error;
pub mod experiment;
pub mod io;
pub mod plot;

pub use error::{Error, Result};
pub use peer_core as core;
