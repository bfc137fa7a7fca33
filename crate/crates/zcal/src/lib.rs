//! File formats, the subprocess detector adapter and the `zcal` command
//! line on top of [`zcal_core`].

pub mod adapter;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;

pub use adapter::{synth_detect_in_dir, ExternalAdapter};
pub use config::FileConfig;
pub use error::{Error, Result};
