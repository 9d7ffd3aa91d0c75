//! Speaker/listener semantic communication simulator with bottom-up
//! curriculum Q-learning and a flat Q-learning comparator.

pub mod acceptance;
pub mod agents;
pub mod analysis;
pub mod baseline;
pub mod belief;
pub mod curriculum;
pub mod environment;
pub mod error;
pub mod experiment;
pub mod rng;
pub mod scenario;

pub use belief::{validate_descriptor_structure, BeliefId, BeliefMask, BeliefSet};
pub use error::{Error, Result};
pub use scenario::{EventKind, Scenario, ScenarioConfig};
