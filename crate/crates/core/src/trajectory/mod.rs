//! Recorded episodes, training targets derived from them, and the JSONL
//! episode format.
//!
//! Frame `i` holds the observation at tick `t_i`, the placement executed on the
//! transition to `t_i + 1` (if any) and the reward of that transition.

mod io;
mod labels;
mod record;
mod stats;
mod synthetic;
mod validate;
mod window;

pub use io::{load_dataset, load_episode, parse_episode, save_episode, write_episode, FORMAT_VERSION};
pub use labels::{delay_labels, returns_to_go, sample_weights, SampleWeights};
pub use record::{replay_episode, EpisodeRecorder};
pub use stats::{dataset_stats, DatasetStats};
pub use synthetic::synthetic_episode;
pub use validate::{validate_episode, ValidationReport};
pub use window::{identity_perm, random_perm, reshuffle_cards, Dataset, TrajectoryWindow, WindowStep};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{densify, EngineError, Observation, Roster, UnitView, GRID_W, GRID_H, TICK_HZ};
use crate::rewards::RewardBreakdown;

pub const DEFAULT_T_DELAY: u32 = 20;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported episode format version {0}")]
    UnsupportedVersion(u32),
    #[error("episode ends without an outcome line")]
    TruncatedEpisode,
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("dataset contains no action frames")]
    NoActionFrames,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("card permutation is not a bijection on 1..=8")]
    NonBijective,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// A card placement in the acting side's own view. `slot` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub slot: u8,
    pub x: u8,
    pub y: u8,
}

impl Action {
    pub fn in_range(&self) -> bool {
        (1..=4).contains(&self.slot) && (self.x as usize) < GRID_W && (self.y as usize) < GRID_H
    }

    /// Flat position class `x * 32 + y`.
    pub fn pos_index(&self) -> usize {
        self.x as usize * GRID_H + self.y as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Human,
    Bot,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub v: u32,
    /// Card ids of both decks, absolute side 0 first.
    pub decks: Vec<Vec<u32>>,
    pub seed: u64,
    pub tick_hz: u32,
    pub source: Source,
    /// Absolute side whose perspective the frames are recorded from.
    #[serde(default)]
    pub side: u8,
    /// Frames carry the opponent's executed placements, which makes the file
    /// replayable without the opponent's controller.
    #[serde(default)]
    pub opponent_log: bool,
}

impl EpisodeHeader {
    pub fn new(decks: [Vec<u32>; 2], seed: u64, source: Source, side: u8) -> Self {
        Self {
            v: io::FORMAT_VERSION,
            decks: decks.to_vec(),
            seed,
            tick_hz: TICK_HZ,
            source,
            side,
            opponent_log: true,
        }
    }

    pub fn own_deck(&self) -> &[u32] {
        &self.decks[self.side as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub tick: u64,
    pub units: Vec<UnitView>,
    /// Deck-local card index per slot, `0` while the slot refills.
    pub hand: [u8; 4],
    pub elixir: f64,
    pub action: Option<Action>,
    /// Opponent placement on the same transition, in the opponent's own view.
    pub opp: Option<Action>,
    pub reward: RewardBreakdown,
}

impl Frame {
    pub fn is_action_frame(&self) -> bool {
        self.action.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeOutcome {
    Win,
    Loss,
    Draw,
    Abandoned,
}

impl EpisodeOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            EpisodeOutcome::Win => "win",
            EpisodeOutcome::Loss => "loss",
            EpisodeOutcome::Draw => "draw",
            EpisodeOutcome::Abandoned => "abandoned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub header: EpisodeHeader,
    pub frames: Vec<Frame>,
    pub outcome: EpisodeOutcome,
    pub t_end: f64,
}

impl Episode {
    pub fn rewards(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.reward.total()).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.frames.iter().map(|f| f.reward.total()).sum()
    }

    pub fn action_count(&self) -> usize {
        self.frames.iter().filter(|f| f.is_action_frame()).count()
    }

    /// Elixir cost per card of the recorder's deck, indexed by deck-local id - 1.
    pub fn deck_costs(&self, roster: &Roster) -> Vec<u8> {
        self.header
            .own_deck()
            .iter()
            .map(|&id| roster.card(id).map(|c| c.elixir_cost as u8).unwrap_or(0))
            .collect()
    }

    /// Dense observation of frame `i`; the cooldown channel is zero.
    pub fn observation(&self, i: usize, roster: &Roster) -> Observation {
        let f = &self.frames[i];
        let costs = self.deck_costs(roster);
        Observation {
            grid: densify(&f.units, roster),
            hand: f.hand,
            costs: f.hand.map(|c| if c == 0 { 0 } else { costs[c as usize - 1] }),
            elixir: f.elixir,
            t_seconds: f.tick as f64 / self.header.tick_hz as f64,
        }
    }
}
