//! Experiment plumbing: config files, checkpoints, result tables, charts
//! and sweep orchestration.

pub mod checkpoint;
pub mod conf;
pub mod report;
pub mod svg;
pub mod sweep;
