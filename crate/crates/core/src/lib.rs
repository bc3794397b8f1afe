//! Core library for running autonomous hardware-design agent sessions and
//! grading them against checkpoint-based benchmark tasks.
//!
//! The pieces compose roughly as: [`task`] defines what a benchmark task is,
//! [`gateway`] talks to chat/embedding models (with a deterministic replay
//! backend for tests), [`kb`] is the retrieval store behind the query skills,
//! [`skills`] wraps the hardware tools and parses their output, [`agent`] is
//! the action/observation loop, [`eval`] grades a finished workspace, and
//! [`scoring`] turns verdicts into weighted percentages and suite reports.

pub mod agent;
pub mod eval;
pub mod gateway;
pub mod kb;
pub mod sandbox;
pub mod scoring;
pub mod skills;
pub mod task;
