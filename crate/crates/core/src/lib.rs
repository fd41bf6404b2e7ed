pub mod agents;
pub mod decoy_space;
pub mod error;
pub mod exec;
pub mod impact;
pub mod personas;
pub mod scenario;
pub mod seeding;
pub mod simulation;
pub mod stats;
pub mod study;

pub use error::{Error, Result};
