//! File formats, plots, the end-to-end pipeline and the command line on top
//! of [`agreelab_core`].

pub mod config;
pub mod error;
pub mod exec;
pub mod io;
pub mod pipeline;
pub mod plot;

pub use error::{AppError, AppResult};
