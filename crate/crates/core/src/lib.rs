//! Regression-aware automated program repair.
//!
//! The crate validates candidate regression bugs across their four snapshots,
//! extracts coverage-minimized inducing/fixing change sets, and drives
//! zero-shot or conversational LLM repair with optional inducing-change
//! context, reporting plausibility, correctness ratios and token cost.

pub mod adapter;
pub mod changes;
pub mod coverage;
pub mod funnel;
pub mod gateway;
pub mod metrics;
pub mod prompt;
pub mod repair;
pub mod model;
