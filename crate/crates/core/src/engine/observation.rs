//! Grid features seen by a decision model.
//!
//! Channel layout of each occupied cell:
//!
//! | ch | meaning                              |
//! |----|--------------------------------------|
//! | 0  | `class_id / 150`                     |
//! | 1  | `+1` friendly, `-1` enemy            |
//! | 2  | `hp / max_hp`                        |
//! | 3  | air troop                            |
//! | 4  | building                             |
//! | 5  | spell effect                         |
//! | 6  | defensive tower                      |
//! | 7  | attack cooldown as a fraction of 1 s |
//! | 8-14 | reserved, always zero              |
//!
//! Empty cells are all-zero. Towers are written first, then units in uid
//! order, so a cell shared by several units holds the newest one.

use serde::{Deserialize, Serialize};

use super::roster::{ClassTraits, Roster, AUX_TOWER_CLASS, MAIN_TOWER_CLASS, MAX_CLASS_ID};
use super::state::{Faction, GameState, TowerSlot, UnitKind};
use super::{ATTACK_PERIOD_TICKS, CHANNELS, GRID_H, GRID_LEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// `18 x 32 x 15`, indexed by [`grid_index`].
    pub grid: Vec<f64>,
    /// Deck-local card index per hand slot, `0` for an empty slot.
    pub hand: [u8; 4],
    /// Elixir cost per hand slot, `0` for an empty slot.
    pub costs: [u8; 4],
    pub elixir: f64,
    pub t_seconds: f64,
}

impl Observation {
    pub fn nonzero_cells(&self) -> usize {
        self.grid.chunks(CHANNELS).filter(|c| c.iter().any(|&v| v != 0.0)).count()
    }

    pub fn cell(&self, x: usize, y: usize) -> &[f64] {
        let i = grid_index(x, y, 0);
        &self.grid[i..i + CHANNELS]
    }
}

#[inline]
pub fn grid_index(x: usize, y: usize, c: usize) -> usize {
    (x * GRID_H + y) * CHANNELS + c
}

/// One entry of the sparse grid encoding stored in episode files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitView {
    pub x: u8,
    pub y: u8,
    pub cls: u32,
    /// 0 friendly, 1 enemy, relative to the viewer.
    pub bel: u8,
    pub hp_frac: f64,
}

struct Cellwrite {
    x: u8,
    y: u8,
    cls: u32,
    bel: u8,
    hp_frac: f64,
    traits: ClassTraits,
    cooldown: f64,
}

fn cell_writes(state: &GameState, faction: Faction) -> Vec<Cellwrite> {
    let mut out = Vec::with_capacity(6 + state.units.len());
    for t in state.towers.iter().filter(|t| t.standing()) {
        let c = t.cell().view(faction);
        out.push(Cellwrite {
            x: c.x,
            y: c.y,
            cls: if t.slot == TowerSlot::Main { MAIN_TOWER_CLASS } else { AUX_TOWER_CLASS },
            bel: (t.faction != faction) as u8,
            hp_frac: t.hp as f64 / t.max_hp as f64,
            traits: ClassTraits { is_tower: true, ..Default::default() },
            cooldown: t.cooldown as f64 / ATTACK_PERIOD_TICKS as f64,
        });
    }
    for u in state.units.iter().filter(|u| u.hp > 0) {
        let c = u.pos.view(faction);
        out.push(Cellwrite {
            x: c.x,
            y: c.y,
            cls: u.class_id,
            bel: (u.faction != faction) as u8,
            hp_frac: u.hp as f64 / u.max_hp as f64,
            traits: ClassTraits {
                is_air: u.is_air(),
                is_building: u.kind == UnitKind::Building,
                is_spell: u.kind == UnitKind::SpellEffect,
                is_tower: false,
            },
            cooldown: u.cooldown as f64 / ATTACK_PERIOD_TICKS as f64,
        });
    }
    out
}

fn write_cell(grid: &mut [f64], w: &Cellwrite) {
    let i = grid_index(w.x as usize, w.y as usize, 0);
    let cell = &mut grid[i..i + CHANNELS];
    cell.fill(0.0);
    cell[0] = w.cls as f64 / MAX_CLASS_ID as f64;
    cell[1] = if w.bel == 0 { 1.0 } else { -1.0 };
    cell[2] = w.hp_frac;
    cell[3] = w.traits.is_air as u8 as f64;
    cell[4] = w.traits.is_building as u8 as f64;
    cell[5] = w.traits.is_spell as u8 as f64;
    cell[6] = w.traits.is_tower as u8 as f64;
    cell[7] = w.cooldown;
}

fn hand_view(state: &GameState, faction: Faction) -> ([u8; 4], [u8; 4]) {
    let p = state.player(faction);
    (p.hand.map(|h| h.unwrap_or(0)), p.hand_costs())
}

/// Renders the state from `faction`'s perspective.
pub fn encode_observation(state: &GameState, faction: Faction) -> Observation {
    let mut grid = vec![0.0; GRID_LEN];
    for w in cell_writes(state, faction) {
        write_cell(&mut grid, &w);
    }
    let (hand, costs) = hand_view(state, faction);
    Observation { grid, hand, costs, elixir: state.player(faction).elixir(), t_seconds: state.t_seconds() }
}

/// The sparse unit list written to episode files, in draw order.
pub fn sparse_units(state: &GameState, faction: Faction) -> Vec<UnitView> {
    cell_writes(state, faction)
        .into_iter()
        .map(|w| UnitView { x: w.x, y: w.y, cls: w.cls, bel: w.bel, hp_frac: w.hp_frac })
        .collect()
}

/// Rebuilds a dense grid from the sparse list. The cooldown channel is not
/// part of the sparse encoding and comes back as zero.
pub fn densify(units: &[UnitView], roster: &Roster) -> Vec<f64> {
    let mut grid = vec![0.0; GRID_LEN];
    for u in units {
        write_cell(
            &mut grid,
            &Cellwrite {
                x: u.x,
                y: u.y,
                cls: u.cls,
                bel: u.bel,
                hp_frac: u.hp_frac,
                traits: roster.class_traits(u.cls),
                cooldown: 0.0,
            },
        );
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Cell, Command, Unit, ELIXIR_UNITS};

    fn fresh() -> GameState {
        let r = Roster::builtin();
        let d = r.default_deck();
        GameState::new_match(&r, &d, &d, 42).unwrap()
    }

    fn unit(uid: u32, pos: Cell, faction: Faction, hp: u32) -> Unit {
        Unit {
            uid,
            pos,
            class_id: 12,
            faction,
            hp,
            max_hp: 320,
            kind: UnitKind::Troop { air: false },
            damage: 60,
            range: 5.0,
            speed: 1.0,
            targets_air: true,
            cooldown: 0,
            move_progress: 0.0,
            ttl: None,
        }
    }

    #[test]
    fn only_towers_gives_six_cells() {
        let obs = encode_observation(&fresh(), 0);
        assert_eq!(obs.nonzero_cells(), 6);
        assert_eq!(obs.grid.len(), 18 * 32 * 15);
        let main = obs.cell(8, 2);
        assert_eq!(main[0], 1.0 / 150.0);
        assert_eq!(main[1], 1.0);
        assert_eq!(main[6], 1.0);
    }

    #[test]
    fn enemy_unit_channels() {
        let mut s = fresh();
        s.units.push(unit(1, Cell::new(3, 10), 1, 160));
        let obs = encode_observation(&s, 0);
        let c = obs.cell(3, 10);
        assert_eq!(c[0], 12.0 / 150.0);
        assert_eq!(c[1], -1.0);
        assert_eq!(c[2], 0.5);
        assert!(c[8..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mirrored_state_gives_same_view() {
        let mut s = fresh();
        s.units.push(unit(1, Cell::new(3, 10), 1, 160));
        s.units.push(unit(2, Cell::new(9, 20), 0, 300));
        s.players[0].elixir_units = 3 * ELIXIR_UNITS;
        s.step(Command::Noop, Command::Noop).unwrap();
        let a = encode_observation(&s, 0);
        let b = encode_observation(&s.mirror(), 1);
        assert_eq!(a, b);
    }

    #[test]
    fn colocated_units_count_once() {
        let mut s = fresh();
        s.units.push(unit(1, Cell::new(4, 4), 0, 100));
        s.units.push(unit(2, Cell::new(4, 4), 1, 200));
        let obs = encode_observation(&s, 0);
        assert_eq!(obs.nonzero_cells(), 7);
        // newest uid wins the cell
        assert_eq!(obs.cell(4, 4)[1], -1.0);
    }

    #[test]
    fn densify_matches_encoding_except_cooldown() {
        let mut s = fresh();
        s.units.push(unit(1, Cell::new(3, 10), 1, 160));
        let r = Roster::builtin();
        let mut dense = encode_observation(&s, 1).grid;
        for cell in dense.chunks_mut(CHANNELS) {
            cell[7] = 0.0;
        }
        assert_eq!(densify(&sparse_units(&s, 1), &r), dense);
    }
}
