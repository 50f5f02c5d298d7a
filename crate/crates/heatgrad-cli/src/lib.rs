//! Library surface of the experiment runner: config parsing, the parallel
//! sample runner, experiment execution and output writers. The `heatgrad`
//! binary is a thin wrapper over these modules.

pub mod config;
pub mod describe;
pub mod output;
pub mod parallel;
pub mod runexp;
pub mod selftest;
