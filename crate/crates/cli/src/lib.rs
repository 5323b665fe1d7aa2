//! Library surface of the experiment runner, used by the binary and the
//! integration tests.

pub mod config;
pub mod csvio;
pub mod runner;
pub mod svg;
