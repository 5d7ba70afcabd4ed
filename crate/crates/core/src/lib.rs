//! Workflow planning for task-oriented dialogue agents.
//!
//! The crate compiles the workflows of a knowledge base into STRIPS planning
//! problems, turns the resulting plans into action lists injected into
//! dialogue contexts, and scores agent predictions made under teacher
//! forcing.

pub mod dialogue;
pub mod fixtures;
pub mod harness;
pub mod kb;
pub mod metrics;
pub mod parse;
pub mod planner;
pub mod prompt;
