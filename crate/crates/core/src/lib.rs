//! Static analysis of cross-chain bridge contracts at the EVM bytecode level.
//!
//! The pipeline ingests runtime bytecode for the contracts on both sides of a
//! bridge, recovers control flow, extracts access-control checks and the
//! resources they protect, stitches both chains together through a synthetic
//! relayer, and reports cross-chain vulnerabilities with concrete traces.

pub mod access;
pub mod analysis;
pub mod association;
pub mod bridge;
pub mod config;
pub mod error;
pub mod evm;
pub mod report;
pub mod taint;
pub mod xgraph;

pub use config::AnalysisConfig;
pub use error::{Error, Result};
