//! Transport-independent live match: one human on side 0 against a scripted
//! bot, driven by JSON messages and an external 10 Hz clock.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{BotConfig, Controller, Difficulty, ScriptedBot};
use crate::engine::{sparse_units, Cell, Command, EngineError, GameState, Roster, TowerSlot, UnitView, GRID_H, GRID_W};
use crate::trajectory::{save_episode, EpisodeHeader, EpisodeOutcome, EpisodeRecorder, Source, TrajectoryError};

/// The human always plays absolute side 0, so its own view is the absolute view.
const HUMAN: u8 = 0;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn default_opponent() -> Difficulty {
    Difficulty::Builtin
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Start {
        seed: u64,
        #[serde(default = "default_opponent")]
        opponent: Difficulty,
    },
    Play {
        slot: u8,
        x: u8,
        y: u8,
    },
    Pause,
    Resume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerView {
    /// 0 for the human's towers.
    pub bel: u8,
    pub slot: TowerSlot,
    pub x: u8,
    pub y: u8,
    pub hp: u32,
    pub max_hp: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub units: Vec<UnitView>,
    /// Deck-local card index per slot, 0 while the slot refills.
    pub hand: [u8; 4],
    pub costs: [u8; 4],
    pub elixir: f64,
    pub t: f64,
    pub towers: Vec<TowerView>,
}

impl StateView {
    pub fn of(state: &GameState) -> Self {
        let p = state.player(HUMAN);
        let towers = state
            .towers
            .iter()
            .map(|t| {
                let c = t.cell();
                TowerView { bel: (t.faction != HUMAN) as u8, slot: t.slot, x: c.x, y: c.y, hp: t.hp, max_hp: t.max_hp }
            })
            .collect();
        Self {
            units: sparse_units(state, HUMAN),
            hand: p.hand.map(|h| h.unwrap_or(0)),
            costs: p.hand_costs(),
            elixir: p.elixir(),
            t: state.t_seconds(),
            towers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State { tick: u64, view: StateView },
    Reject { reason: String },
    Result { outcome: EpisodeOutcome, episode_path: String },
}

impl ServerMessage {
    pub fn reject(reason: impl Into<String>) -> Self {
        ServerMessage::Reject { reason: reason.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Running,
    Paused,
    Finished,
}

struct Live {
    state: GameState,
    recorder: EpisodeRecorder,
    opponent: ScriptedBot,
    pending: Option<Command>,
}

/// One connection's match. `handle` answers client messages immediately;
/// `tick` advances the engine by one step while running and is the only
/// place state messages for ticks after the first come from.
pub struct Session {
    roster: Roster,
    deck: Vec<u32>,
    record_dir: PathBuf,
    name: String,
    phase: Phase,
    live: Option<Live>,
    final_state: Option<GameState>,
    episode_path: Option<PathBuf>,
}

impl Session {
    /// `name` becomes the episode file stem inside `record_dir`.
    pub fn new(roster: Roster, record_dir: impl Into<PathBuf>, name: impl Into<String>) -> Self {
        let deck = roster.default_deck();
        Self { roster, deck, record_dir: record_dir.into(), name: name.into(), phase: Phase::Idle, live: None, final_state: None, episode_path: None }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn state(&self) -> Option<&GameState> {
        self.live.as_ref().map(|l| &l.state).or(self.final_state.as_ref())
    }

    pub fn episode_path(&self) -> Option<&Path> {
        self.episode_path.as_deref()
    }

    /// Parses one text frame. Anything unparseable is rejected and leaves the
    /// session untouched.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(m) => self.handle(m),
            Err(_) => vec![ServerMessage::reject("malformed_message")],
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        match (msg, self.phase) {
            (ClientMessage::Start { seed, opponent }, Phase::Idle) => match self.start(seed, opponent) {
                Ok(m) => vec![m],
                Err(e) => vec![ServerMessage::reject(format!("start_failed: {e}"))],
            },
            (ClientMessage::Start { .. }, Phase::Finished) => vec![ServerMessage::reject("match_finished")],
            (ClientMessage::Start { .. }, _) => vec![ServerMessage::reject("match_in_progress")],
            (ClientMessage::Play { slot, x, y }, Phase::Running) => self.play(slot, x, y).into_iter().collect(),
            (ClientMessage::Play { .. }, Phase::Paused) => vec![ServerMessage::reject("paused")],
            (ClientMessage::Pause, Phase::Running) => {
                self.phase = Phase::Paused;
                vec![]
            }
            (ClientMessage::Resume, Phase::Paused) => {
                self.phase = Phase::Running;
                vec![]
            }
            (ClientMessage::Pause | ClientMessage::Resume, Phase::Running | Phase::Paused) => vec![],
            (_, Phase::Idle) => vec![ServerMessage::reject("not_started")],
            (_, Phase::Finished) => vec![ServerMessage::reject("match_finished")],
        }
    }

    fn start(&mut self, seed: u64, opponent: Difficulty) -> Result<ServerMessage, SessionError> {
        let state = GameState::new_match(&self.roster, &self.deck, &self.deck, seed)?;
        let header = EpisodeHeader::new([self.deck.clone(), self.deck.clone()], seed, Source::Human, HUMAN);
        let opponent = ScriptedBot::new(BotConfig::new(opponent), seed.wrapping_add(1));
        let msg = ServerMessage::State { tick: state.tick, view: StateView::of(&state) };
        self.live = Some(Live { state, recorder: EpisodeRecorder::new(header), opponent, pending: None });
        self.phase = Phase::Running;
        Ok(msg)
    }

    /// Accepted plays are queued for the next tick and acknowledged by its
    /// state message; the engine re-checks them when they are applied.
    fn play(&mut self, slot: u8, x: u8, y: u8) -> Option<ServerMessage> {
        let live = self.live.as_mut().expect("running sessions are live");
        if !(1..=4).contains(&slot) {
            return Some(ServerMessage::reject("invalid_slot"));
        }
        if x as usize >= GRID_W || y as usize >= GRID_H {
            return Some(ServerMessage::reject("illegal_cell"));
        }
        if live.pending.is_some() {
            return Some(ServerMessage::reject("play_pending"));
        }
        let pos = Cell::new(x, y);
        if let Err(reason) = live.state.check_play(HUMAN, slot, pos) {
            return Some(ServerMessage::reject(reason.as_str()));
        }
        live.pending = Some(Command::Play { slot, pos });
        None
    }

    /// One engine step. Does nothing unless running, so a paused match never
    /// advances.
    pub fn tick(&mut self) -> Result<Vec<ServerMessage>, SessionError> {
        if self.phase != Phase::Running {
            return Ok(vec![]);
        }
        let live = self.live.as_mut().expect("running sessions are live");
        let own = live.pending.take().unwrap_or(Command::Noop);
        let opp = live.opponent.act(&live.state, 1 - HUMAN);
        live.recorder.begin(&live.state);
        let events = live.state.step(own, opp)?;
        live.recorder.end(&live.state, &events);
        let mut out = vec![ServerMessage::State { tick: live.state.tick, view: StateView::of(&live.state) }];
        if live.state.is_finished() {
            out.push(self.close(false)?);
        }
        Ok(out)
    }

    /// Flushes an unfinished match as abandoned. Returns the written path, if any.
    pub fn disconnect(&mut self) -> Result<Option<PathBuf>, SessionError> {
        if matches!(self.phase, Phase::Running | Phase::Paused) {
            self.close(true)?;
        }
        Ok(self.episode_path.clone())
    }

    fn close(&mut self, abandoned: bool) -> Result<ServerMessage, SessionError> {
        let live = self.live.take().expect("closing a live session");
        let ep = if abandoned { live.recorder.abandon(&live.state) } else { live.recorder.finish(&live.state) };
        fs::create_dir_all(&self.record_dir)?;
        let path = self.record_dir.join(format!("{}.jsonl", self.name));
        save_episode(&ep, &path)?;
        self.phase = Phase::Finished;
        self.final_state = Some(live.state);
        self.episode_path = Some(path.clone());
        Ok(ServerMessage::Result { outcome: ep.outcome, episode_path: path.display().to_string() })
    }
}
