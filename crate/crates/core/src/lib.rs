//! Harness for context-dependent code snippet adaptation with LLMs.
//!
//! The pipeline derives method-level adaptation cases from a class-level
//! benchmark, renders prompts for each prompting strategy, drives a chat
//! model through the strategy's conversation protocol, executes the adapted
//! code against the benchmark tests and aggregates the results.

pub mod analysis;
pub mod conversation;
pub mod dataset;
pub mod gateway;
pub mod orchestrator;
pub mod prompt;
pub mod annotation;
pub mod harness;
pub mod metrics;
pub mod api;
pub mod config;
pub mod pipeline;
pub mod run;
