//! Deployment harness for the eiqis pipeline: configuration, TCP transport
//! between tiers, end-to-end runs and their reports.

pub mod config;
pub mod net;
pub mod report;
pub mod run;

pub use config::{Deployment, Mode};
pub use report::RunReport;
