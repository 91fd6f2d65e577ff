//! File formats, artifact layout and the command-line pipeline built on
//! [`supcon_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod pretrained;
pub mod sweep;

pub use config::RunConfig;
pub use error::{Error, Result};
