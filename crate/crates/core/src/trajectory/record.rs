use super::{Action, Episode, EpisodeHeader, EpisodeOutcome, Frame, TrajectoryError};
use crate::engine::{
    outcome, replay, replay_prefix, sparse_units, Command, Event, Faction, GameState, Outcome, Roster, UnitView,
};
use crate::rewards::{total_reward_with, RewardConfig, RewardSnapshot};

struct Pending {
    tick: u64,
    units: Vec<UnitView>,
    hand: [u8; 4],
    elixir: f64,
    snap: RewardSnapshot,
}

/// Builds an [`Episode`] from one side's perspective while a match runs.
/// Call [`begin`](Self::begin) before each engine step and
/// [`end`](Self::end) after it.
pub struct EpisodeRecorder {
    header: EpisodeHeader,
    frames: Vec<Frame>,
    reward_cfg: RewardConfig,
    pending: Option<Pending>,
}

fn played_by(events: &[Event], faction: Faction) -> Option<Action> {
    events.iter().find_map(|e| match *e {
        Event::Played { faction: f, slot, pos, .. } if f == faction => {
            let own = pos.view(faction);
            Some(Action { slot, x: own.x, y: own.y })
        }
        _ => None,
    })
}

impl EpisodeRecorder {
    pub fn new(header: EpisodeHeader) -> Self {
        Self { header, frames: Vec::new(), reward_cfg: RewardConfig::default(), pending: None }
    }

    pub fn with_reward_config(mut self, cfg: RewardConfig) -> Self {
        self.reward_cfg = cfg;
        self
    }

    pub fn side(&self) -> Faction {
        self.header.side
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn begin(&mut self, state: &GameState) {
        let side = self.header.side;
        let p = state.player(side);
        self.pending = Some(Pending {
            tick: state.tick,
            units: sparse_units(state, side),
            hand: p.hand.map(|h| h.unwrap_or(0)),
            elixir: p.elixir(),
            snap: RewardSnapshot::of(state, side),
        });
    }

    /// Closes the frame opened by `begin` using the post-step state.
    pub fn end(&mut self, state: &GameState, events: &[Event]) -> &Frame {
        let p = self.pending.take().expect("begin() before end()");
        let side = self.header.side;
        let cur = RewardSnapshot::of(state, side);
        self.frames.push(Frame {
            tick: p.tick,
            units: p.units,
            hand: p.hand,
            elixir: p.elixir,
            action: played_by(events, side),
            opp: if self.header.opponent_log { played_by(events, 1 - side) } else { None },
            reward: total_reward_with(&p.snap, &cur, self.reward_cfg),
        });
        self.frames.last().expect("just pushed")
    }

    /// Outcome comes from the engine; an unfinished match is `Abandoned`.
    pub fn finish(self, state: &GameState) -> Episode {
        let side = self.header.side;
        let result = match outcome(state) {
            Outcome::Win(f) if f == side => EpisodeOutcome::Win,
            Outcome::Win(_) => EpisodeOutcome::Loss,
            Outcome::Draw => EpisodeOutcome::Draw,
            Outcome::Ongoing => EpisodeOutcome::Abandoned,
        };
        self.into_episode(state, result)
    }

    pub fn abandon(self, state: &GameState) -> Episode {
        self.into_episode(state, EpisodeOutcome::Abandoned)
    }

    fn into_episode(self, state: &GameState, outcome: EpisodeOutcome) -> Episode {
        Episode { header: self.header, frames: self.frames, outcome, t_end: state.t_seconds() }
    }
}

fn command(a: Option<Action>) -> Command {
    match a {
        Some(a) => Command::Play { slot: a.slot, pos: crate::engine::Cell::new(a.x, a.y) },
        None => Command::Noop,
    }
}

/// Absolute per-tick command log reconstructed from an episode.
pub(crate) fn command_log(ep: &Episode) -> Vec<(Command, Command)> {
    ep.frames
        .iter()
        .map(|f| {
            let (own, opp) = (command(f.action), command(f.opp));
            if ep.header.side == 0 {
                (own, opp)
            } else {
                (opp, own)
            }
        })
        .collect()
}

/// Re-runs the recorded match. Finished episodes must end exactly at the
/// recorded frame count; abandoned ones replay as a prefix.
pub fn replay_episode(ep: &Episode, roster: &Roster) -> Result<GameState, TrajectoryError> {
    if !ep.header.opponent_log {
        return Err(TrajectoryError::Malformed { line: 1, msg: "episode carries no opponent log".into() });
    }
    let decks = (ep.header.decks[0].as_slice(), ep.header.decks[1].as_slice());
    let log = command_log(ep);
    let state = if ep.outcome == EpisodeOutcome::Abandoned {
        replay_prefix(ep.header.seed, roster, decks, &log)?
    } else {
        replay(ep.header.seed, roster, decks, &log)?
    };
    Ok(state)
}
