//! Opponents and policy adapters that turn a game state into a [`Command`].

mod bots;
mod policy;

pub use bots::{scripted_bot, BotConfig, Difficulty, ScriptedBot, DEFENSIVE_CELL};
pub use policy::{decode_action, Decision, PolicyAgent};

use serde::{Deserialize, Serialize};

use crate::engine::{Command, Faction, GameState};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentDiagnostics {
    pub attempted: u64,
    pub executed: u64,
    pub illegal: u64,
}

impl std::ops::AddAssign for AgentDiagnostics {
    fn add_assign(&mut self, o: Self) {
        self.attempted += o.attempted;
        self.executed += o.executed;
        self.illegal += o.illegal;
    }
}

/// Anything that can drive one side of a match.
pub trait Controller {
    /// Called once per tick before the engine steps.
    fn act(&mut self, state: &GameState, faction: Faction) -> Command;

    /// Reward observed by this side for the tick that just ran.
    fn observe(&mut self, _reward: f64) {}

    fn diagnostics(&self) -> AgentDiagnostics {
        AgentDiagnostics::default()
    }
}

/// Never plays a card.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoopAgent;

impl Controller for NoopAgent {
    fn act(&mut self, _: &GameState, _: Faction) -> Command {
        Command::Noop
    }
}
