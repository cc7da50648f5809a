//! Deterministic card-RTS simulator.
//!
//! The arena is an 18 x 32 cell grid. Faction 0 owns rows `0..16`, faction 1
//! owns rows `16..32`. Commands and observations use the acting faction's own
//! perspective: faction 1 sees row `y` as `31 - y`, so both sides deploy at low `y`.
//!
//! One tick is 100 ms. All state mutation happens in [`GameState::step`], and
//! all randomness comes from the per-match seeded generator.

mod observation;
mod replay;
mod roster;
mod sim;
mod state;

pub use observation::{densify, encode_observation, grid_index, sparse_units, Observation, UnitView};
pub use replay::{replay, replay_prefix, CommandLog};
pub use roster::{
    CardKind, CardSpec, ClassTraits, Roster, AUX_TOWER_CLASS, DECK_SIZE, MAIN_TOWER_CLASS,
    MAX_CLASS_ID,
};
pub use sim::outcome;
pub use state::{
    Cell, Command, Event, Faction, GameState, IllegalReason, MatchRules, Outcome, PlayerState,
    Stage, TowerSlot, TowerState, Unit, UnitKind,
};

use thiserror::Error;

pub const GRID_W: usize = 18;
pub const GRID_H: usize = 32;
pub const CHANNELS: usize = 15;
pub const GRID_LEN: usize = GRID_W * GRID_H * CHANNELS;
/// Rows `0..OWN_HALF_ROWS` belong to the viewer.
pub const OWN_HALF_ROWS: u8 = 16;

pub const TICK_HZ: u32 = 10;
pub const TICK_SECONDS: f64 = 0.1;

/// Elixir is tracked in integer units of 1/28 so that regeneration is exact.
pub const ELIXIR_UNITS: u32 = 28;
pub const MAX_ELIXIR_UNITS: u32 = 10 * ELIXIR_UNITS;
pub const START_ELIXIR_UNITS: u32 = 5 * ELIXIR_UNITS;

/// A played hand slot stays empty for this many ticks (1.0 s).
pub const REFILL_TICKS: u64 = 10;
pub const ATTACK_PERIOD_TICKS: u32 = 10;
pub const SPELL_RADIUS: f64 = 1.5;
pub const SPELL_EFFECT_TICKS: u32 = 10;
pub const BUILDING_LIFETIME_TICKS: u32 = 300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("deck must contain 8 cards, got {0}")]
    DeckSize(usize),
    #[error("card {0} appears twice in the deck")]
    DuplicateCard(u32),
    #[error("unknown card id {0}")]
    UnknownCard(u32),
    #[error("invalid roster: {0}")]
    InvalidRoster(String),
    #[error("match already finished")]
    MatchFinished,
    #[error("command log ended at tick {tick} before the match finished")]
    LogTooShort { tick: u64 },
    #[error("command log has {extra} entries after the match finished")]
    LogTooLong { extra: usize },
}
