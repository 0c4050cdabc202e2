//! Scene generation, Monte Carlo experiment runners and report output.

pub mod experiments;
pub mod report;
pub mod scenes;
