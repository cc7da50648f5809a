//! Per-frame reward terms computed from consecutive tower and elixir snapshots.
//!
//! Towers are indexed `bel * 3 + i` where `bel` is 0 for the viewer's own
//! towers and 1 for the enemy's, and `i` is 0 for the main tower, 1 and 2 for
//! the left and right auxiliaries. Every term carries the sign `(-1)^(bel+1)`
//! so damage to enemy towers is positive.

use serde::{Deserialize, Serialize};

use crate::engine::{Faction, GameState};

const AUX_DESTROY_REWARD: f64 = 1.0;
const MAIN_DESTROY_REWARD: f64 = 3.0;
const ACTIVATION_REWARD: f64 = 0.1;
const OVERFLOW_PENALTY: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSnapshot {
    pub tower_hp: [u32; 6],
    pub tower_max_hp: [u32; 6],
    pub towers_alive: [bool; 6],
    pub main_activated: [bool; 2],
    pub elixir_overflow_s: f64,
    pub t_seconds: f64,
}

impl RewardSnapshot {
    pub fn of(state: &GameState, faction: Faction) -> Self {
        let idx = |bel: usize, i: usize| {
            let f = if bel == 0 { faction } else { 1 - faction } as usize;
            f * 3 + i
        };
        let tower = |k: usize| &state.towers[idx(k / 3, k % 3)];
        RewardSnapshot {
            tower_hp: std::array::from_fn(|k| tower(k).hp),
            tower_max_hp: std::array::from_fn(|k| tower(k).max_hp),
            towers_alive: std::array::from_fn(|k| tower(k).standing()),
            main_activated: std::array::from_fn(|bel| tower(bel * 3).activated),
            elixir_overflow_s: state.player(faction).elixir_overflow_s(),
            t_seconds: state.t_seconds(),
        }
    }

    /// Exchanges own and enemy towers.
    pub fn swap_sides(&self) -> Self {
        let rot = |k: usize| (k + 3) % 6;
        RewardSnapshot {
            tower_hp: std::array::from_fn(|k| self.tower_hp[rot(k)]),
            tower_max_hp: std::array::from_fn(|k| self.tower_max_hp[rot(k)]),
            towers_alive: std::array::from_fn(|k| self.towers_alive[rot(k)]),
            main_activated: [self.main_activated[1], self.main_activated[0]],
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub tower: f64,
    pub destroy: f64,
    pub activate: f64,
    pub elixir: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.tower + self.destroy + self.activate + self.elixir
    }
}

/// Switches between the literal activation sign `(-1)^bel` and its negation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub flip_activation_sign: bool,
}

fn side_sign(bel: usize) -> f64 {
    if bel == 0 {
        -1.0
    } else {
        1.0
    }
}

pub fn tower_reward(prev: &RewardSnapshot, cur: &RewardSnapshot) -> f64 {
    (0..6)
        .map(|k| {
            let lost = prev.tower_hp[k] as f64 - cur.tower_hp[k] as f64;
            side_sign(k / 3) * lost / cur.tower_max_hp[k] as f64
        })
        .sum()
}

pub fn destruction_reward(prev: &RewardSnapshot, cur: &RewardSnapshot) -> f64 {
    (0..6)
        .filter(|&k| prev.towers_alive[k] && !cur.towers_alive[k])
        .map(|k| {
            let size = if k % 3 == 0 { MAIN_DESTROY_REWARD } else { AUX_DESTROY_REWARD };
            side_sign(k / 3) * size
        })
        .sum()
}

pub fn activation_reward(prev: &RewardSnapshot, cur: &RewardSnapshot, cfg: RewardConfig) -> f64 {
    (0..2)
        .filter(|&bel| {
            !prev.main_activated[bel]
                && cur.main_activated[bel]
                && prev.towers_alive[bel * 3 + 1]
                && prev.towers_alive[bel * 3 + 2]
        })
        .map(|bel| {
            let literal = if bel == 0 { 1.0 } else { -1.0 };
            let sign = if cfg.flip_activation_sign { -literal } else { literal };
            sign * ACTIVATION_REWARD
        })
        .sum()
}

fn whole_seconds(s: f64) -> i64 {
    (s + 1e-9).floor() as i64
}

pub fn elixir_penalty(prev: &RewardSnapshot, cur: &RewardSnapshot) -> f64 {
    let crossed = whole_seconds(cur.elixir_overflow_s) - whole_seconds(prev.elixir_overflow_s);
    -OVERFLOW_PENALTY * crossed.max(0) as f64
}

pub fn total_reward(prev: &RewardSnapshot, cur: &RewardSnapshot) -> RewardBreakdown {
    total_reward_with(prev, cur, RewardConfig::default())
}

pub fn total_reward_with(prev: &RewardSnapshot, cur: &RewardSnapshot, cfg: RewardConfig) -> RewardBreakdown {
    RewardBreakdown {
        tower: tower_reward(prev, cur),
        destroy: destruction_reward(prev, cur),
        activate: activation_reward(prev, cur, cfg),
        elixir: elixir_penalty(prev, cur),
    }
}
