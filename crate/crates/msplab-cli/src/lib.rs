//! Experiment runner behind the `msplab` binary.

pub mod experiments;
pub mod run;
pub mod verify;
