//! Simulation library for graph-regularized semi-parametric contextual
//! bandits: user graphs, the synthetic environment, policies, the experiment
//! harness, and CSV reporting.

pub mod environment;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod policies;
pub mod report;
pub mod seed;
pub mod verify;
