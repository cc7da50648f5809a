use serde::{Deserialize, Serialize};

use super::record::command_log;
use super::{Episode, EpisodeOutcome};
use crate::engine::{sparse_units, GameState, Roster, GRID_H, GRID_W, TICK_HZ};
use crate::rewards::{total_reward, RewardSnapshot};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub episodes: usize,
    pub frames: usize,
    pub replayed: usize,
    /// `(episode name, violation)` pairs.
    pub violations: Vec<(String, String)>,
}

impl ValidationReport {
    pub fn add(&mut self, name: &str, ep: &Episode, roster: &Roster) {
        self.episodes += 1;
        self.frames += ep.frames.len();
        if ep.header.opponent_log {
            self.replayed += 1;
        }
        self.violations.extend(validate_episode(ep, roster).into_iter().map(|v| (name.to_string(), v)));
    }

    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Schema checks on every frame, plus a full engine replay when the episode
/// carries the opponent log. Returns human-readable violations.
pub fn validate_episode(ep: &Episode, roster: &Roster) -> Vec<String> {
    let mut out = Vec::new();
    let h = &ep.header;
    if h.tick_hz != TICK_HZ {
        out.push(format!("tick_hz {} (expected {TICK_HZ})", h.tick_hz));
    }
    if h.decks.len() != 2 || h.side > 1 {
        out.push("header needs two decks and side 0 or 1".into());
        return out;
    }
    for d in &h.decks {
        if let Err(e) = roster.resolve_deck(d) {
            out.push(format!("deck: {e}"));
        }
    }
    if !out.is_empty() {
        return out;
    }

    for (i, f) in ep.frames.iter().enumerate() {
        if i > 0 && f.tick <= ep.frames[i - 1].tick {
            out.push(format!("frame {i}: tick {} not increasing", f.tick));
        }
        let mut seen = [false; 9];
        for &c in &f.hand {
            if c > 8 {
                out.push(format!("frame {i}: hand id {c} out of range"));
            } else if c != 0 && std::mem::replace(&mut seen[c as usize], true) {
                out.push(format!("frame {i}: hand id {c} repeated"));
            }
        }
        if !(0.0..=10.0).contains(&f.elixir) {
            out.push(format!("frame {i}: elixir {} out of bounds", f.elixir));
        }
        for u in &f.units {
            if u.x as usize >= GRID_W || u.y as usize >= GRID_H || u.bel > 1 || !(u.hp_frac > 0.0 && u.hp_frac <= 1.0) {
                out.push(format!("frame {i}: bad unit {u:?}"));
            }
        }
        if let Some(a) = f.action {
            if !a.in_range() {
                out.push(format!("frame {i}: action out of range {a:?}"));
            } else if f.hand[a.slot as usize - 1] == 0 {
                out.push(format!("frame {i}: action on empty slot {}", a.slot));
            }
        }
        let r = f.reward;
        if ![r.tower, r.destroy, r.activate, r.elixir].iter().all(|v| v.is_finite()) {
            out.push(format!("frame {i}: non-finite reward"));
        }
    }
    if let Some(last) = ep.frames.last() {
        if ep.t_end * TICK_HZ as f64 + 1e-6 < last.tick as f64 {
            out.push(format!("t_end {} precedes the last frame", ep.t_end));
        }
    }
    if out.is_empty() && h.opponent_log {
        out.extend(replay_check(ep, roster));
    }
    out
}

fn replay_check(ep: &Episode, roster: &Roster) -> Vec<String> {
    let h = &ep.header;
    let side = h.side;
    let mut state = match GameState::new_match(roster, &h.decks[0], &h.decks[1], h.seed) {
        Ok(s) => s,
        Err(e) => return vec![format!("replay: {e}")],
    };
    let log = command_log(ep);
    for (i, (f, &(a, b))) in ep.frames.iter().zip(&log).enumerate() {
        if state.is_finished() {
            return vec![format!("replay: match finished before frame {i}")];
        }
        let p = state.player(side);
        if state.tick != f.tick
            || sparse_units(&state, side) != f.units
            || p.hand.map(|c| c.unwrap_or(0)) != f.hand
            || p.elixir() != f.elixir
        {
            return vec![format!("replay: frame {i} differs from the engine state")];
        }
        let prev = RewardSnapshot::of(&state, side);
        if let Err(e) = state.step(a, b) {
            return vec![format!("replay: {e}")];
        }
        let r = total_reward(&prev, &RewardSnapshot::of(&state, side));
        if (r.total() - f.reward.total()).abs() > 1e-9 {
            return vec![format!("replay: frame {i} reward differs")];
        }
    }
    let finished = state.is_finished();
    match (ep.outcome, finished) {
        (EpisodeOutcome::Abandoned, _) => Vec::new(),
        (_, false) => vec!["replay: match did not finish at the recorded end".into()],
        (o, true) => {
            let expect = match crate::engine::outcome(&state) {
                crate::engine::Outcome::Win(f) if f == side => EpisodeOutcome::Win,
                crate::engine::Outcome::Win(_) => EpisodeOutcome::Loss,
                _ => EpisodeOutcome::Draw,
            };
            if o == expect {
                Vec::new()
            } else {
                vec![format!("replay: outcome {} but engine says {}", o.as_str(), expect.as_str())]
            }
        }
    }
}
