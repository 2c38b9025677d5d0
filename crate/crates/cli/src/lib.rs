//! Scenario-driven front end for the PMM simulator: scenario parsing,
//! artifact generation and the built-in acceptance checks.

pub mod checks;
pub mod literal;
pub mod runner;
pub mod scenario;
