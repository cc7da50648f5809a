use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::roster::CardSpec;
use super::{ELIXIR_UNITS, GRID_H, GRID_W, TICK_HZ};

/// 0 is the friendly side of the recording player, 1 the enemy.
pub type Faction = u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: u8,
    pub y: u8,
}

impl Cell {
    pub const fn new(x: u8, y: u8) -> Self {
        Self { x, y }
    }

    pub fn in_bounds(self) -> bool {
        (self.x as usize) < GRID_W && (self.y as usize) < GRID_H
    }

    /// Converts between absolute coordinates and a faction's own view.
    /// The map is an involution.
    pub fn view(self, faction: Faction) -> Cell {
        if faction == 0 {
            self
        } else {
            Cell::new(self.x, (GRID_H - 1) as u8 - self.y)
        }
    }

    pub fn distance(self, other: Cell) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        (dx * dx + dy * dy).sqrt()
    }

    /// Index into the flat 576-cell position space (`x * 32 + y`).
    pub fn index(self) -> usize {
        self.x as usize * GRID_H + self.y as usize
    }

    pub fn from_index(i: usize) -> Cell {
        Cell::new((i / GRID_H) as u8, (i % GRID_H) as u8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Command {
    Noop,
    /// `slot` is 1-based, `pos` is in the acting faction's own view.
    Play { slot: u8, pos: Cell },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Regular,
    Overtime,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ongoing,
    Win(Faction),
    Draw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TowerSlot {
    Main,
    LeftAux,
    RightAux,
}

impl TowerSlot {
    pub const ALL: [TowerSlot; 3] = [TowerSlot::Main, TowerSlot::LeftAux, TowerSlot::RightAux];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Tower cell in the owner's own view.
    pub fn own_cell(self) -> Cell {
        match self {
            TowerSlot::Main => Cell::new(8, 2),
            TowerSlot::LeftAux => Cell::new(3, 5),
            TowerSlot::RightAux => Cell::new(14, 5),
        }
    }

    pub fn max_hp(self) -> u32 {
        match self {
            TowerSlot::Main => 2400,
            _ => 1400,
        }
    }

    pub fn damage(self) -> u32 {
        match self {
            TowerSlot::Main => 60,
            _ => 50,
        }
    }

    pub fn range(self) -> f64 {
        match self {
            TowerSlot::Main => 7.0,
            _ => 7.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerState {
    pub slot: TowerSlot,
    pub faction: Faction,
    pub hp: u32,
    pub max_hp: u32,
    pub activated: bool,
    pub cooldown: u32,
}

impl TowerState {
    pub fn new(slot: TowerSlot, faction: Faction) -> Self {
        Self { slot, faction, hp: slot.max_hp(), max_hp: slot.max_hp(), activated: false, cooldown: 0 }
    }

    pub fn standing(&self) -> bool {
        self.hp > 0
    }

    /// Absolute cell.
    pub fn cell(&self) -> Cell {
        self.slot.own_cell().view(self.faction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Troop { air: bool },
    Building,
    /// Visual marker of a spell impact; cannot be targeted.
    SpellEffect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub uid: u32,
    /// Absolute cell.
    pub pos: Cell,
    pub class_id: u32,
    pub faction: Faction,
    pub hp: u32,
    pub max_hp: u32,
    pub kind: UnitKind,
    pub damage: u32,
    pub range: f64,
    pub speed: f64,
    pub targets_air: bool,
    pub cooldown: u32,
    pub move_progress: f64,
    /// Remaining lifetime for buildings and spell effects.
    pub ttl: Option<u32>,
}

impl Unit {
    pub fn is_air(&self) -> bool {
        matches!(self.kind, UnitKind::Troop { air: true })
    }

    pub fn targetable(&self) -> bool {
        self.hp > 0 && !matches!(self.kind, UnitKind::SpellEffect)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerState {
    pub deck: Vec<CardSpec>,
    /// Deck-local card index `1..=8` per hand slot; `None` while refilling.
    pub hand: [Option<u8>; 4],
    pub queue: VecDeque<u8>,
    pub refill_deadline: [Option<u64>; 4],
    pub elixir_units: u32,
    pub overflow_ticks: u32,
}

impl PlayerState {
    pub fn elixir(&self) -> f64 {
        self.elixir_units as f64 / ELIXIR_UNITS as f64
    }

    pub fn elixir_overflow_s(&self) -> f64 {
        self.overflow_ticks as f64 / TICK_HZ as f64
    }

    pub fn card(&self, local: u8) -> &CardSpec {
        &self.deck[local as usize - 1]
    }

    /// Card in a 1-based hand slot.
    pub fn slot_card(&self, slot: u8) -> Option<&CardSpec> {
        let local = (*self.hand.get((slot as usize).wrapping_sub(1))?)?;
        Some(self.card(local))
    }

    pub fn hand_costs(&self) -> [u8; 4] {
        let mut out = [0u8; 4];
        for (o, h) in out.iter_mut().zip(self.hand) {
            *o = h.map(|c| self.card(c).elixir_cost as u8).unwrap_or(0);
        }
        out
    }
}

/// Stage lengths in ticks. The defaults are three minutes of regular time and
/// two minutes of overtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRules {
    pub regular_ticks: u64,
    pub total_ticks: u64,
}

impl Default for MatchRules {
    fn default() -> Self {
        Self { regular_ticks: 1800, total_ticks: 3000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub tick: u64,
    pub stage: Stage,
    pub rules: MatchRules,
    /// Index `faction * 3 + slot`.
    pub towers: [TowerState; 6],
    pub units: Vec<Unit>,
    pub players: [PlayerState; 2],
    pub next_uid: u32,
    pub rng: ChaCha8Rng,
}

impl GameState {
    pub fn t_seconds(&self) -> f64 {
        self.tick as f64 / TICK_HZ as f64
    }

    pub fn tower(&self, faction: Faction, slot: TowerSlot) -> &TowerState {
        &self.towers[faction as usize * 3 + slot.index()]
    }

    pub fn standing_towers(&self, faction: Faction) -> usize {
        self.towers.iter().filter(|t| t.faction == faction && t.standing()).count()
    }

    pub fn is_finished(&self) -> bool {
        self.stage == Stage::Finished
    }

    pub fn player(&self, faction: Faction) -> &PlayerState {
        &self.players[faction as usize]
    }

    /// Swaps the two sides: factions, towers and players exchange, and every
    /// absolute row `y` becomes `31 - y`.
    pub fn mirror(&self) -> GameState {
        let mut m = self.clone();
        m.towers = std::array::from_fn(|i| {
            let src = &self.towers[(i + 3) % 6];
            TowerState { faction: 1 - src.faction, ..src.clone() }
        });
        m.players = [self.players[1].clone(), self.players[0].clone()];
        for u in &mut m.units {
            u.faction = 1 - u.faction;
            u.pos = u.pos.view(1);
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IllegalReason {
    EmptySlot,
    InsufficientElixir,
    IllegalCell,
}

impl IllegalReason {
    pub fn as_str(self) -> &'static str {
        match self {
            IllegalReason::EmptySlot => "empty_slot",
            IllegalReason::InsufficientElixir => "insufficient_elixir",
            IllegalReason::IllegalCell => "illegal_cell",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Played { tick: u64, faction: Faction, slot: u8, card: u8, class_id: u32, pos: Cell },
    IllegalPlay { tick: u64, faction: Faction, reason: IllegalReason },
    UnitDamaged { tick: u64, uid: u32, amount: u32 },
    TowerDamaged { tick: u64, faction: Faction, slot: TowerSlot, amount: u32 },
    UnitDied { tick: u64, uid: u32 },
    TowerDestroyed { tick: u64, faction: Faction, slot: TowerSlot },
    TowerActivated { tick: u64, faction: Faction },
    StageChanged { tick: u64, stage: Stage },
}
