//! Reference-free truthfulness scoring for LLM answers.

pub mod config;
pub mod curate;
pub mod dataset;
pub mod digest;
pub mod divergence;
pub mod pipeline;
pub mod providers;
pub mod ranking;
pub mod scoring;
pub mod similarity;
pub mod synthetic;
pub mod theorylab;
pub mod types;

pub use divergence::{f_star, g_star, DivergenceError, DivergenceKind};
pub use types::*;
