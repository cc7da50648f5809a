//! Card-RTS workbench: a deterministic simulator, reward terms, trajectory
//! tooling, sequence decision models, scripted agents, an evaluation harness,
//! a labeled-scene compositor and the session protocol for human play.

pub mod agents;
pub mod compositor;
pub mod engine;
pub mod evaluator;
pub mod model;
pub mod rewards;
pub mod session;
pub mod trajectory;
