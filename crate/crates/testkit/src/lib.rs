//! Deterministic fixture tasks and scripted mock agents.
//!
//! A fixture "kernel" is a small YAML document whose fields script the
//! outcome of each phase: whether it compiles, whether it is correct (and
//! up to which problem size), and the time it reports per test case. The
//! runner and the mock agents speak the same file contracts as real tasks
//! and agent CLIs, so the harness cannot tell them apart.

pub mod agent;
pub mod fixtures;
pub mod kernel;
pub mod runner;

pub use agent::Behavior;
pub use fixtures::{write_fixture_tree, write_unseen_sets, FixtureTask, FIXTURE_TASKS};
pub use kernel::KernelSpec;
