//! Configuration, staged pipeline, artifacts and reports for `frontstab`.

pub mod cli;
pub mod config;
pub mod pipeline;
pub mod report;
pub mod stages;
