//! Dynamic side of the graphtaint toolkit: a runner that executes taint
//! tests against a GraphQL endpoint, and an in-memory mock target serving
//! the rule set under a configurable role-based policy.

pub mod mock;
pub mod protocol;
pub mod runner;
pub mod server;
#[cfg(test)]
mod testutil;

pub use mock::{FaultInjection, MockConfig, MockTarget};
pub use runner::{classify_outcome, run_plan, Classification, RunnerConfig, TestReport, Transport};
