//! Screening harness for LLM-assisted title/abstract screening.
//!
//! The crate is organised along the workflow:
//!
//! - [`corpus`]: ingest a human-labelled corpus and partition it into train/test splits.
//! - [`promptkit`]: render screening prompts, chat-formatted SFT examples and a training manifest.
//! - [`inference`]: drive multi-temperature inference through a pluggable transport and parse
//!   model output into include/exclude decisions.
//! - [`metrics`]: confusion-matrix based classification metrics.
//! - [`agreement`]: chance-corrected agreement coefficients with bootstrap intervals.
//! - [`report`] and [`commands`]: evaluation reports and the subcommand pipeline used by the CLI.

pub mod agreement;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod digest;
pub mod inference;
pub mod label;
pub mod metrics;
pub mod promptkit;
pub mod report;

pub use label::{LabelError, ScreeningLabel};
