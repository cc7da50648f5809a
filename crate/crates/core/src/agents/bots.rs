//! Scripted opponents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{CardKind, CardSpec, Cell, Command, Faction, GameState, TowerSlot, ELIXIR_UNITS, OWN_HALF_ROWS, TICK_HZ};

use super::{AgentDiagnostics, Controller};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Random,
    Easy,
    Builtin,
}

impl std::str::FromStr for Difficulty {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Difficulty::Random),
            "easy" => Ok(Difficulty::Easy),
            "builtin" => Ok(Difficulty::Builtin),
            other => Err(format!("unknown opponent '{other}' (expected random, easy or builtin)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BotConfig {
    pub difficulty: Difficulty,
    pub reaction_period_s: f64,
    /// 0..1; sets the elixir level at which the builtin bot starts a push.
    pub aggression: f64,
}

impl BotConfig {
    pub fn new(difficulty: Difficulty) -> Self {
        Self { difficulty, reaction_period_s: 1.0, aggression: 0.5 }
    }

    fn period_ticks(&self) -> u64 {
        ((self.reaction_period_s * TICK_HZ as f64).round() as u64).max(1)
    }

    fn attack_threshold(&self) -> f64 {
        10.0 - 6.0 * self.aggression.clamp(0.0, 1.0)
    }
}

/// Cell the easy bot always plays on.
pub const DEFENSIVE_CELL: Cell = Cell::new(8, 6);
const BRIDGE_ROW: u8 = 13;

/// One decision of a scripted bot. Acts only on ticks that are multiples of
/// the reaction period.
pub fn scripted_bot(state: &GameState, faction: Faction, cfg: &BotConfig, rng: &mut impl Rng) -> Command {
    if state.is_finished() || !state.tick.is_multiple_of(cfg.period_ticks()) {
        return Command::Noop;
    }
    match cfg.difficulty {
        Difficulty::Random => {
            let legal = state.legal_actions(faction);
            if legal.is_empty() {
                return Command::Noop;
            }
            let (slot, pos) = legal[rng.random_range(0..legal.len())];
            Command::Play { slot, pos }
        }
        Difficulty::Easy => affordable(state, faction)
            .min_by_key(|(slot, card)| (card.elixir_cost, *slot))
            .map(|(slot, _)| Command::Play { slot, pos: DEFENSIVE_CELL })
            .unwrap_or(Command::Noop),
        Difficulty::Builtin => builtin(state, faction, cfg),
    }
}

fn affordable(state: &GameState, faction: Faction) -> impl Iterator<Item = (u8, &CardSpec)> {
    let p = state.player(faction);
    (1..=4u8).filter_map(move |slot| {
        let card = p.slot_card(slot)?;
        (p.elixir_units >= card.elixir_cost * ELIXIR_UNITS).then_some((slot, card))
    })
}

/// Rule ladder: defend the most advanced intruder, otherwise push the lane of
/// the weakest enemy tower once elixir reaches the attack threshold.
fn builtin(state: &GameState, faction: Faction, cfg: &BotConfig) -> Command {
    let threat = state
        .units
        .iter()
        .filter(|u| u.faction != faction && u.targetable())
        .map(|u| (u.pos.view(faction), u.is_air(), u.uid))
        .filter(|(c, _, _)| c.y < OWN_HALF_ROWS)
        .min_by_key(|&(c, _, uid)| (c.y, uid));

    if let Some((cell, air, _)) = threat {
        let counter = affordable(state, faction)
            .filter(|(_, c)| c.kind != CardKind::Spell && (!air || c.targets_air))
            .max_by_key(|(slot, c)| (c.elixir_cost, std::cmp::Reverse(*slot)));
        if let Some((slot, card)) = counter {
            let back = if card.kind == CardKind::Building { 3 } else { 2 };
            return Command::Play { slot, pos: Cell::new(cell.x, cell.y.saturating_sub(back)) };
        }
        if let Some((slot, _)) = affordable(state, faction)
            .filter(|(_, c)| c.kind == CardKind::Spell)
            .max_by_key(|(slot, c)| (c.damage, std::cmp::Reverse(*slot)))
        {
            return Command::Play { slot, pos: cell };
        }
        return Command::Noop;
    }

    if state.player(faction).elixir() + 1e-9 < cfg.attack_threshold() {
        return Command::Noop;
    }
    let enemy = 1 - faction;
    let weakest = TowerSlot::ALL
        .iter()
        .map(|&s| state.tower(enemy, s))
        .filter(|t| t.standing())
        .min_by_key(|t| (t.hp, t.slot));
    let Some(weakest) = weakest else { return Command::Noop };
    let lane_x = weakest.cell().x;
    if let Some((slot, _)) = affordable(state, faction)
        .filter(|(_, c)| c.kind.is_troop())
        .max_by_key(|(slot, c)| (c.elixir_cost, std::cmp::Reverse(*slot)))
    {
        return Command::Play { slot, pos: Cell::new(lane_x, BRIDGE_ROW) };
    }
    if let Some((slot, _)) = affordable(state, faction)
        .filter(|(_, c)| c.kind == CardKind::Spell && c.damage >= weakest.hp)
        .max_by_key(|(slot, c)| (c.damage, std::cmp::Reverse(*slot)))
    {
        return Command::Play { slot, pos: weakest.cell().view(faction) };
    }
    Command::Noop
}

/// A scripted bot bound to its own seeded generator.
#[derive(Debug, Clone)]
pub struct ScriptedBot {
    pub cfg: BotConfig,
    rng: ChaCha8Rng,
    diag: AgentDiagnostics,
}

impl ScriptedBot {
    pub fn new(cfg: BotConfig, seed: u64) -> Self {
        Self { cfg, rng: ChaCha8Rng::seed_from_u64(seed), diag: AgentDiagnostics::default() }
    }
}

impl Controller for ScriptedBot {
    fn act(&mut self, state: &GameState, faction: Faction) -> Command {
        let cmd = scripted_bot(state, faction, &self.cfg, &mut self.rng);
        if let Command::Play { slot, pos } = cmd {
            self.diag.attempted += 1;
            if state.check_play(faction, slot, pos).is_ok() {
                self.diag.executed += 1;
            } else {
                self.diag.illegal += 1;
            }
        }
        cmd
    }

    fn diagnostics(&self) -> AgentDiagnostics {
        self.diag
    }
}
