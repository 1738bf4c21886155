//! CLI and HTTP service for the tarml pipeline.

pub mod cli;
pub mod pipeline;
pub mod service;
pub mod store;
