use std::cmp::Ordering;
use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::roster::{CardKind, CardSpec, Roster};
use super::state::*;
use super::*;

const RANGE_EPS: f64 = 1e-9;

impl GameState {
    /// Starts a match. Each side's eight cards are shuffled into a queue by the
    /// seeded generator and the first four are drawn into the hand.
    pub fn new_match(
        roster: &Roster,
        deck_a: &[u32],
        deck_b: &[u32],
        seed: u64,
    ) -> Result<GameState, EngineError> {
        Self::with_rules(roster, deck_a, deck_b, seed, MatchRules::default())
    }

    pub fn with_rules(
        roster: &Roster,
        deck_a: &[u32],
        deck_b: &[u32],
        seed: u64,
        rules: MatchRules,
    ) -> Result<GameState, EngineError> {
        let decks = [roster.resolve_deck(deck_a)?, roster.resolve_deck(deck_b)?];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let players = decks.map(|deck| {
            let mut order: Vec<u8> = (1..=DECK_SIZE as u8).collect();
            order.shuffle(&mut rng);
            let mut queue: VecDeque<u8> = order.into();
            let hand = std::array::from_fn(|_| queue.pop_front());
            PlayerState {
                deck,
                hand,
                queue,
                refill_deadline: [None; 4],
                elixir_units: START_ELIXIR_UNITS,
                overflow_ticks: 0,
            }
        });
        let towers = std::array::from_fn(|i| TowerState::new(TowerSlot::ALL[i % 3], (i / 3) as Faction));
        Ok(GameState {
            tick: 0,
            stage: Stage::Regular,
            rules,
            towers,
            units: Vec::new(),
            players,
            next_uid: 1,
            rng,
        })
    }

    /// Checks a play without applying it.
    pub fn check_play(&self, faction: Faction, slot: u8, pos: Cell) -> Result<&CardSpec, IllegalReason> {
        let player = self.player(faction);
        let card = player.slot_card(slot).ok_or(IllegalReason::EmptySlot)?;
        if player.elixir_units < card.elixir_cost * ELIXIR_UNITS {
            return Err(IllegalReason::InsufficientElixir);
        }
        if !pos.in_bounds() || (card.kind.restricted_to_own_half() && pos.y >= OWN_HALF_ROWS) {
            return Err(IllegalReason::IllegalCell);
        }
        Ok(card)
    }

    /// Every `(slot, own-view cell)` pair that [`GameState::step`] would accept.
    pub fn legal_actions(&self, faction: Faction) -> Vec<(u8, Cell)> {
        let mut out = Vec::new();
        if self.is_finished() {
            return out;
        }
        let player = self.player(faction);
        for slot in 1..=4u8 {
            let Some(card) = player.slot_card(slot) else { continue };
            if player.elixir_units < card.elixir_cost * ELIXIR_UNITS {
                continue;
            }
            let rows = if card.kind.restricted_to_own_half() { OWN_HALF_ROWS } else { GRID_H as u8 };
            for x in 0..GRID_W as u8 {
                for y in 0..rows {
                    out.push((slot, Cell::new(x, y)));
                }
            }
        }
        out
    }

    /// Advances the match by one tick.
    pub fn step(&mut self, friendly: Command, enemy: Command) -> Result<Vec<Event>, EngineError> {
        if self.is_finished() {
            return Err(EngineError::MatchFinished);
        }
        let mut events = Vec::new();
        for (faction, cmd) in [(0u8, friendly), (1u8, enemy)] {
            if let Command::Play { slot, pos } = cmd {
                self.apply_play(faction, slot, pos, &mut events);
            }
        }
        self.regenerate_elixir();
        self.resolve_combat(&mut events);
        self.expire_units(&mut events);
        self.units.retain(|u| u.hp > 0);

        self.tick += 1;
        for player in &mut self.players {
            for slot in 0..4 {
                if matches!(player.refill_deadline[slot], Some(d) if d <= self.tick) {
                    player.refill_deadline[slot] = None;
                    player.hand[slot] = player.queue.pop_front();
                }
            }
        }

        match outcome(self) {
            Outcome::Ongoing => {
                if self.stage == Stage::Regular && self.tick >= self.rules.regular_ticks {
                    self.stage = Stage::Overtime;
                    events.push(Event::StageChanged { tick: self.tick, stage: Stage::Overtime });
                }
            }
            _ => {
                self.stage = Stage::Finished;
                events.push(Event::StageChanged { tick: self.tick, stage: Stage::Finished });
            }
        }
        Ok(events)
    }

    fn apply_play(&mut self, faction: Faction, slot: u8, pos: Cell, events: &mut Vec<Event>) {
        let tick = self.tick;
        let card = match self.check_play(faction, slot, pos) {
            Ok(card) => card.clone(),
            Err(reason) => {
                events.push(Event::IllegalPlay { tick, faction, reason });
                return;
            }
        };
        let player = &mut self.players[faction as usize];
        let s = slot as usize - 1;
        let local = player.hand[s].take().expect("checked slot");
        player.elixir_units -= card.elixir_cost * ELIXIR_UNITS;
        player.queue.push_back(local);
        player.refill_deadline[s] = Some(tick + REFILL_TICKS);

        let abs = pos.view(faction);
        events.push(Event::Played { tick, faction, slot, card: local, class_id: card.class_id, pos: abs });
        let uid = self.next_uid;
        self.next_uid += 1;
        let mut unit = Unit {
            uid,
            pos: abs,
            class_id: card.class_id,
            faction,
            hp: card.hp,
            max_hp: card.hp,
            kind: UnitKind::Building,
            damage: card.damage,
            range: card.range_cells,
            speed: card.speed_cells_per_s,
            targets_air: card.targets_air,
            cooldown: 0,
            move_progress: 0.0,
            ttl: None,
        };
        match card.kind {
            CardKind::TroopGround => unit.kind = UnitKind::Troop { air: false },
            CardKind::TroopAir => unit.kind = UnitKind::Troop { air: true },
            CardKind::Building => unit.ttl = Some(BUILDING_LIFETIME_TICKS),
            CardKind::Spell => {
                self.apply_spell(faction, abs, card.damage, events);
                unit.kind = UnitKind::SpellEffect;
                unit.hp = 1;
                unit.max_hp = 1;
                unit.speed = 0.0;
                unit.ttl = Some(SPELL_EFFECT_TICKS);
            }
        }
        self.units.push(unit);
    }

    fn apply_spell(&mut self, faction: Faction, center: Cell, damage: u32, events: &mut Vec<Event>) {
        for i in 0..self.units.len() {
            let u = &self.units[i];
            if u.faction != faction && u.targetable() && u.pos.distance(center) <= SPELL_RADIUS + RANGE_EPS {
                self.damage_unit(i, damage, events);
            }
        }
        for i in 0..6 {
            let t = &self.towers[i];
            if t.faction != faction && t.standing() && t.cell().distance(center) <= SPELL_RADIUS + RANGE_EPS {
                self.damage_tower(i, damage, events);
            }
        }
    }

    fn regenerate_elixir(&mut self) {
        let rate = if self.stage == Stage::Overtime { 2 } else { 1 };
        for p in &mut self.players {
            if p.elixir_units >= MAX_ELIXIR_UNITS {
                p.overflow_ticks += 1;
            } else {
                p.elixir_units = (p.elixir_units + rate).min(MAX_ELIXIR_UNITS);
            }
        }
    }

    fn damage_unit(&mut self, idx: usize, amount: u32, events: &mut Vec<Event>) {
        let u = &mut self.units[idx];
        let dealt = amount.min(u.hp);
        u.hp -= dealt;
        events.push(Event::UnitDamaged { tick: self.tick, uid: u.uid, amount: dealt });
        if u.hp == 0 {
            events.push(Event::UnitDied { tick: self.tick, uid: u.uid });
        }
    }

    fn damage_tower(&mut self, idx: usize, amount: u32, events: &mut Vec<Event>) {
        let base = idx / 3 * 3;
        let aux_alive = self.towers[base + 1].standing() && self.towers[base + 2].standing();
        let tick = self.tick;
        let t = &mut self.towers[idx];
        let dealt = amount.min(t.hp);
        if dealt == 0 {
            return;
        }
        if t.slot == TowerSlot::Main && !t.activated && aux_alive {
            t.activated = true;
            events.push(Event::TowerActivated { tick, faction: t.faction });
        }
        t.hp -= dealt;
        events.push(Event::TowerDamaged { tick, faction: t.faction, slot: t.slot, amount: dealt });
        if t.hp == 0 {
            events.push(Event::TowerDestroyed { tick, faction: t.faction, slot: t.slot });
        }
    }

    /// Nearest enemy within range. Units rank before towers at equal distance,
    /// then lower uid / tower index.
    fn find_target(&self, faction: Faction, from: Cell, range: f64, targets_air: bool) -> Option<Target> {
        let mut best: Option<(f64, Target)> = None;
        let mut consider = |d: f64, t: Target| {
            if d > range + RANGE_EPS {
                return;
            }
            let better = match &best {
                None => true,
                Some((bd, bt)) => match d.partial_cmp(bd).unwrap_or(Ordering::Equal) {
                    Ordering::Less => true,
                    Ordering::Equal => t.rank(self) < bt.rank(self),
                    Ordering::Greater => false,
                },
            };
            if better {
                best = Some((d, t));
            }
        };
        for (i, u) in self.units.iter().enumerate() {
            if u.faction != faction && u.targetable() && (targets_air || !u.is_air()) {
                consider(from.distance(u.pos), Target::Unit(i));
            }
        }
        for (i, t) in self.towers.iter().enumerate() {
            if t.faction != faction && t.standing() {
                consider(from.distance(t.cell()), Target::Tower(i));
            }
        }
        best.map(|(_, t)| t)
    }

    fn strike(&mut self, target: Target, amount: u32, events: &mut Vec<Event>) {
        match target {
            Target::Unit(i) => self.damage_unit(i, amount, events),
            Target::Tower(i) => self.damage_tower(i, amount, events),
        }
    }

    fn resolve_combat(&mut self, events: &mut Vec<Event>) {
        for i in 0..self.units.len() {
            let u = &self.units[i];
            if u.hp == 0 || u.kind == UnitKind::SpellEffect {
                continue;
            }
            let (faction, pos, range, targets_air, damage) = (u.faction, u.pos, u.range, u.targets_air, u.damage);
            let is_troop = matches!(u.kind, UnitKind::Troop { .. });
            let u = &mut self.units[i];
            u.cooldown = u.cooldown.saturating_sub(1);
            match self.find_target(faction, pos, range, targets_air) {
                Some(target) => {
                    if self.units[i].cooldown == 0 {
                        self.units[i].cooldown = ATTACK_PERIOD_TICKS;
                        self.strike(target, damage, events);
                    }
                }
                None if is_troop => self.advance(i),
                None => {}
            }
        }
        for i in 0..6 {
            let t = &self.towers[i];
            if !t.standing() {
                continue;
            }
            let base = i / 3 * 3;
            let awake = t.slot != TowerSlot::Main
                || t.activated
                || !self.towers[base + 1].standing()
                || !self.towers[base + 2].standing();
            let (faction, cell, slot) = (t.faction, t.cell(), t.slot);
            let t = &mut self.towers[i];
            t.cooldown = t.cooldown.saturating_sub(1);
            if !awake {
                continue;
            }
            if let Some(target) = self.find_target(faction, cell, slot.range(), true) {
                if self.towers[i].cooldown == 0 {
                    self.towers[i].cooldown = ATTACK_PERIOD_TICKS;
                    self.strike(target, slot.damage(), events);
                }
            }
        }
    }

    /// Moves a troop toward the nearest standing enemy tower, rows first.
    fn advance(&mut self, i: usize) {
        let (faction, pos) = (self.units[i].faction, self.units[i].pos);
        let goal = self
            .towers
            .iter()
            .filter(|t| t.faction != faction && t.standing())
            .map(|t| t.cell())
            .min_by(|a, b| pos.distance(*a).partial_cmp(&pos.distance(*b)).unwrap_or(Ordering::Equal));
        let Some(goal) = goal else { return };
        let u = &mut self.units[i];
        u.move_progress += u.speed * TICK_SECONDS;
        while u.move_progress >= 1.0 {
            u.move_progress -= 1.0;
            if u.pos.y != goal.y {
                u.pos.y = if goal.y > u.pos.y { u.pos.y + 1 } else { u.pos.y - 1 };
            } else if u.pos.x != goal.x {
                u.pos.x = if goal.x > u.pos.x { u.pos.x + 1 } else { u.pos.x - 1 };
            }
        }
    }

    fn expire_units(&mut self, events: &mut Vec<Event>) {
        for u in &mut self.units {
            if u.hp == 0 {
                continue;
            }
            if let Some(ttl) = u.ttl.as_mut() {
                *ttl = ttl.saturating_sub(1);
                if *ttl == 0 {
                    u.hp = 0;
                    events.push(Event::UnitDied { tick: self.tick, uid: u.uid });
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Target {
    Unit(usize),
    Tower(usize),
}

impl Target {
    fn rank(self, state: &GameState) -> (u8, u32) {
        match self {
            Target::Unit(i) => (0, state.units[i].uid),
            Target::Tower(i) => (1, i as u32),
        }
    }
}

/// Match result as a pure function of the state.
///
/// A destroyed main tower ends the match at any time. From the end of regular
/// time on, unequal standing-tower counts decide the winner (this covers both
/// regular-time expiry and the first destruction in overtime). At the end of
/// overtime the side whose weakest standing tower has more hp wins.
pub fn outcome(state: &GameState) -> Outcome {
    let main_down = |f: Faction| !state.tower(f, TowerSlot::Main).standing();
    match (main_down(0), main_down(1)) {
        (true, true) => return Outcome::Draw,
        (true, false) => return Outcome::Win(1),
        (false, true) => return Outcome::Win(0),
        _ => {}
    }
    if state.tick < state.rules.regular_ticks {
        return Outcome::Ongoing;
    }
    let (a, b) = (state.standing_towers(0), state.standing_towers(1));
    if a != b {
        return Outcome::Win(if a > b { 0 } else { 1 });
    }
    if state.tick < state.rules.total_ticks {
        return Outcome::Ongoing;
    }
    let weakest = |f: Faction| {
        state.towers.iter().filter(|t| t.faction == f && t.standing()).map(|t| t.hp).min().unwrap_or(0)
    };
    match weakest(0).cmp(&weakest(1)) {
        Ordering::Greater => Outcome::Win(0),
        Ordering::Less => Outcome::Win(1),
        Ordering::Equal => Outcome::Draw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fresh(seed: u64) -> GameState {
        let r = Roster::builtin();
        let d = r.default_deck();
        GameState::new_match(&r, &d, &d, seed).unwrap()
    }

    fn slot_of(state: &GameState, faction: Faction, card_id: u32) -> Option<u8> {
        let p = state.player(faction);
        (1..=4).find(|&s| p.slot_card(s).map(|c| c.card_id) == Some(card_id))
    }

    #[test]
    fn new_match_draws_four() {
        let s = fresh(42);
        for p in &s.players {
            assert_eq!(p.hand.iter().flatten().count(), 4);
            assert_eq!(p.queue.len(), 4);
            let mut all: Vec<u8> = p.hand.iter().flatten().copied().chain(p.queue.iter().copied()).collect();
            all.sort();
            assert_eq!(all, (1..=8).collect::<Vec<_>>());
            assert_eq!(p.elixir(), 5.0);
        }
        assert_eq!(s.stage, Stage::Regular);
        assert!(s.towers.iter().all(|t| t.hp == t.max_hp));
        assert_eq!(s, fresh(42));
    }

    #[test]
    fn seeds_change_queue_order() {
        let order = |s: &GameState| -> Vec<u8> {
            let p = &s.players[0];
            p.hand.iter().flatten().copied().chain(p.queue.iter().copied()).collect()
        };
        let base = order(&fresh(42));
        assert!((43..143).any(|seed| order(&fresh(seed)) != base));
    }

    #[test]
    fn duplicate_deck_rejected() {
        let r = Roster::builtin();
        let bad = [1, 2, 3, 4, 5, 6, 7, 7];
        assert_eq!(
            GameState::new_match(&r, &bad, &r.default_deck(), 1).unwrap_err(),
            EngineError::DuplicateCard(7)
        );
    }

    #[test]
    fn legal_play_rotates_card() {
        let mut s = fresh(42);
        // knight costs 3; it may sit in the queue, so draw until it is in hand
        while slot_of(&s, 0, 1).is_none() {
            let slot = (1..=4).find(|&k| s.players[0].hand[k as usize - 1].is_some()).unwrap();
            s.players[0].elixir_units = MAX_ELIXIR_UNITS;
            s.step(Command::Play { slot, pos: Cell::new(2, 2) }, Command::Noop).unwrap();
            for _ in 0..10 {
                s.step(Command::Noop, Command::Noop).unwrap();
            }
        }
        let slot = slot_of(&s, 0, 1).unwrap();
        s.players[0].elixir_units = START_ELIXIR_UNITS;
        let now = s.tick;
        let events = s.step(Command::Play { slot, pos: Cell::new(4, 8) }, Command::Noop).unwrap();
        assert!(events.iter().any(|e| matches!(e, Event::Played { .. })));
        let p = &s.players[0];
        // 5.0 - 3 + one regen unit
        assert_eq!(p.elixir_units, 2 * ELIXIR_UNITS + 1);
        assert_eq!(p.hand[slot as usize - 1], None);
        assert_eq!(p.refill_deadline[slot as usize - 1], Some(now + REFILL_TICKS));
        assert_eq!(p.queue.len(), 5);
        // the slot stays empty until exactly 1.0 s after the play
        for _ in 0..8 {
            s.step(Command::Noop, Command::Noop).unwrap();
            assert_eq!(s.players[0].hand[slot as usize - 1], None);
        }
        s.step(Command::Noop, Command::Noop).unwrap();
        assert_eq!(s.tick, now + REFILL_TICKS);
        assert!(s.players[0].hand[slot as usize - 1].is_some());
        assert_eq!(s.players[0].queue.len(), 4);
    }

    #[test]
    fn insufficient_elixir_is_rejected() {
        let mut s = fresh(7);
        s.players[0].elixir_units = 0;
        let before_units = s.units.len();
        let ev = s.step(Command::Play { slot: 1, pos: Cell::new(3, 3) }, Command::Noop).unwrap();
        assert!(ev.contains(&Event::IllegalPlay { tick: 0, faction: 0, reason: IllegalReason::InsufficientElixir }));
        assert_eq!(s.units.len(), before_units);
        assert_eq!(s.tick, 1);
        assert!(s.players[0].hand[0].is_some());
    }

    #[test]
    fn troop_on_enemy_half_is_illegal() {
        let mut s = fresh(7);
        s.players[0].elixir_units = MAX_ELIXIR_UNITS;
        let troop_slot = (1..=4)
            .find(|&k| s.players[0].slot_card(k).unwrap().kind.is_troop())
            .unwrap();
        let ev = s.step(Command::Play { slot: troop_slot, pos: Cell::new(3, 20) }, Command::Noop).unwrap();
        assert!(ev.iter().any(|e| matches!(e, Event::IllegalPlay { reason: IllegalReason::IllegalCell, .. })));
    }

    #[test]
    fn elixir_overflow_accumulates_at_cap() {
        let mut s = fresh(3);
        s.players[0].elixir_units = MAX_ELIXIR_UNITS;
        for _ in 0..10 {
            s.step(Command::Noop, Command::Noop).unwrap();
        }
        assert_eq!(s.players[0].elixir(), 10.0);
        assert_eq!(s.players[0].elixir_overflow_s(), 1.0);
        assert_eq!(s.players[1].overflow_ticks, 0);
    }

    #[test]
    fn legal_action_counts() {
        let mut s = fresh(5);
        s.players[0].elixir_units = 0;
        assert!(s.legal_actions(0).is_empty());

        // four troop cards in hand at full elixir
        s.players[0].elixir_units = MAX_ELIXIR_UNITS;
        s.players[0].hand = [Some(1), Some(2), Some(3), Some(4)];
        assert_eq!(s.legal_actions(0).len(), 4 * 18 * 16);

        // one affordable spell: every cell for that slot
        s.players[0].hand = [Some(7), None, None, None];
        s.players[0].elixir_units = 2 * ELIXIR_UNITS;
        let acts = s.legal_actions(0);
        assert_eq!(acts.len(), 18 * 32);
        assert!(acts.iter().all(|&(slot, _)| slot == 1));
    }

    #[test]
    fn legal_actions_agree_with_step() {
        let s = fresh(9);
        let legal: std::collections::BTreeSet<_> = s.legal_actions(0).into_iter().collect();
        for slot in 1..=4u8 {
            for x in 0..18 {
                for y in 0..32 {
                    let ok = s.check_play(0, slot, Cell::new(x, y)).is_ok();
                    assert_eq!(ok, legal.contains(&(slot, Cell::new(x, y))));
                }
            }
        }
    }

    fn crafted() -> GameState {
        let mut s = fresh(1);
        s.tick = s.rules.regular_ticks;
        s
    }

    #[test]
    fn regular_expiry_more_towers_wins() {
        let mut s = crafted();
        s.towers[4].hp = 0; // enemy left aux
        assert_eq!(outcome(&s), Outcome::Win(0));
        s.towers[4].hp = 10;
        s.towers[1].hp = 0;
        assert_eq!(outcome(&s), Outcome::Win(1));
    }

    #[test]
    fn main_tower_destruction_wins_immediately() {
        let mut s = fresh(1);
        s.tick = 1000;
        s.towers[3].hp = 0;
        assert_eq!(outcome(&s), Outcome::Win(0));
        s.towers[3].hp = 5;
        s.towers[0].hp = 0;
        assert_eq!(outcome(&s), Outcome::Win(1));
    }

    #[test]
    fn equal_counts_go_to_overtime_then_min_hp() {
        let mut s = crafted();
        assert_eq!(outcome(&s), Outcome::Ongoing);
        s.tick = s.rules.total_ticks;
        s.towers[1].hp = 412;
        s.towers[4].hp = 95;
        assert_eq!(outcome(&s), Outcome::Win(0));
        s.towers[4].hp = 412;
        assert_eq!(outcome(&s), Outcome::Draw);
    }

    #[test]
    fn stage_moves_to_overtime_at_regular_expiry() {
        let mut s = fresh(2);
        s.rules.regular_ticks = 5;
        for _ in 0..5 {
            s.step(Command::Noop, Command::Noop).unwrap();
        }
        assert_eq!(s.stage, Stage::Overtime);
        s.towers[4].hp = 1;
        s.towers[4].hp = 0;
        s.step(Command::Noop, Command::Noop).unwrap();
        assert_eq!(s.stage, Stage::Finished);
        assert_eq!(s.step(Command::Noop, Command::Noop), Err(EngineError::MatchFinished));
    }

    #[test]
    fn spell_hits_tower_and_activates_main() {
        let mut s = fresh(4);
        s.players[0].hand = [Some(6), None, None, None]; // fireball
        s.players[0].elixir_units = MAX_ELIXIR_UNITS;
        let enemy_main = s.tower(1, TowerSlot::Main).cell().view(0);
        let ev = s.step(Command::Play { slot: 1, pos: enemy_main }, Command::Noop).unwrap();
        assert!(ev.contains(&Event::TowerActivated { tick: 0, faction: 1 }));
        assert_eq!(s.tower(1, TowerSlot::Main).hp, 2400 - 350);
        assert!(s.units.iter().any(|u| u.kind == UnitKind::SpellEffect));
    }

    #[test]
    fn mirror_is_an_involution() {
        let mut s = fresh(11);
        s.players[0].elixir_units = MAX_ELIXIR_UNITS;
        let slot = (1..=4).find(|&k| s.players[0].slot_card(k).unwrap().kind.is_troop()).unwrap();
        s.step(Command::Play { slot, pos: Cell::new(5, 7) }, Command::Noop).unwrap();
        assert_eq!(s.mirror().mirror(), s);
    }
}
