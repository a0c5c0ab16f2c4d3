//! Scenario runner around the epidemic-control library: data loading,
//! calibration, both intervention solvers, policy comparison, and artifact
//! export.

pub mod config;
pub mod pipeline;
pub mod policy;
pub mod report;
