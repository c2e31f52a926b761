//! Query-driven mining and classification of GitHub issue discussions.
//!
//! Issues matching a search query are fetched together with their comment
//! threads, every comment line is cleaned and tokenized, a linear text
//! classifier assigns each line a discussion category, and the results are
//! written as CSV.

pub mod classifier;
pub mod cli;
pub mod github_client;
pub mod pipeline;
pub mod report;
pub mod text_prep;
