//! Library surface of the CLI so integration tests can reuse the experiment
//! configuration and command plumbing.

pub mod commands;
pub mod config;
pub mod svg;
