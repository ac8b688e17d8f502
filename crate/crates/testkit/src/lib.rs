//! Synthetic fixtures and slow, obviously-correct reference implementations
//! used as oracles by the slidescope test suites.

pub mod fixtures;
pub mod oracles;

pub use fixtures::*;
