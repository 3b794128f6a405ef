//! Pipeline wiring behind the `graphtaint` binary: project loading and the
//! subcommand implementations.

pub mod commands;
pub mod project;
