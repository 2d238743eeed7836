//! Strategy-guided few-shot prompting for task solving.
//!
//! The library builds task-solving strategies with four model-backed
//! agents (generate, execute, optimize, evaluate), turns the best ones
//! into few-shot prompts, and answers test questions with them. A
//! scripted backend replays canned responses so every run is
//! reproducible offline; an HTTP backend talks to a live chat API.

pub mod agents;
pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod inference;
pub mod pipeline;
pub mod prompts;
pub mod workers;

pub use error::{Error, Result};
