//! Scene and channel generation, the processing stages and the end-to-end
//! run.

pub mod channel;
pub mod commands;
pub mod config;
pub mod run;
pub mod scene;
pub mod stages;

pub use config::Config;
pub use run::{run_pipeline, RunReport, Timing};
