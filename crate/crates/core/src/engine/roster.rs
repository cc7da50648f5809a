//! Card definitions and deck files.
//!
//! A roster is a JSON document with a `cards` array and a `decks` map:
//!
//! ```json
//! { "cards": [ { "card_id": 1, "class_id": 11, "name": "knight", "kind": "troop_ground",
//!                "elixir_cost": 3, "hp": 700, "damage": 80, "range_cells": 1.5,
//!                "speed_cells_per_s": 1.0, "targets_air": false } ],
//!   "decks": { "default": [1, 2, 3, 4, 5, 6, 7, 8] } }
//! ```
//!
//! Decks list roster `card_id`s. Inside a match, hand entries are deck-local
//! indices `1..=8` (position in the deck, one-based).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EngineError;

/// Number of cards in a deck.
pub const DECK_SIZE: usize = 8;

/// Class ids reserved for the defensive towers.
pub const MAIN_TOWER_CLASS: u32 = 1;
pub const AUX_TOWER_CLASS: u32 = 2;

/// Largest class id in the global class space.
pub const MAX_CLASS_ID: u32 = 150;

const DEFAULT_ROSTER: &str = include_str!("../../data/roster.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardKind {
    TroopGround,
    TroopAir,
    Spell,
    Building,
}

impl CardKind {
    pub fn is_troop(self) -> bool {
        matches!(self, CardKind::TroopGround | CardKind::TroopAir)
    }

    /// Troops and buildings must be placed on the owner's half.
    pub fn restricted_to_own_half(self) -> bool {
        !matches!(self, CardKind::Spell)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardSpec {
    pub card_id: u32,
    pub class_id: u32,
    #[serde(default)]
    pub name: String,
    pub kind: CardKind,
    pub elixir_cost: u32,
    pub hp: u32,
    pub damage: u32,
    pub range_cells: f64,
    pub speed_cells_per_s: f64,
    pub targets_air: bool,
}

impl CardSpec {
    fn validate(&self) -> Result<(), EngineError> {
        let bad = |why: &str| EngineError::InvalidRoster(format!("card {}: {why}", self.card_id));
        if !(1..=10).contains(&self.elixir_cost) {
            return Err(bad("elixir_cost must be in 1..=10"));
        }
        if self.class_id == 0 || self.class_id > MAX_CLASS_ID {
            return Err(bad("class_id must be in 1..=150"));
        }
        if self.class_id == MAIN_TOWER_CLASS || self.class_id == AUX_TOWER_CLASS {
            return Err(bad("class ids 1 and 2 are reserved for towers"));
        }
        match self.kind {
            CardKind::Spell if self.hp != 0 => Err(bad("spells have hp = 0")),
            CardKind::Spell => Ok(()),
            _ if self.hp == 0 => Err(bad("troops and buildings need hp > 0")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roster {
    pub cards: Vec<CardSpec>,
    #[serde(default)]
    pub decks: BTreeMap<String, Vec<u32>>,
}

impl Roster {
    /// The bundled eight-card roster.
    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_ROSTER).expect("bundled roster is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let roster: Roster =
            serde_json::from_str(text).map_err(|e| EngineError::InvalidRoster(e.to_string()))?;
        roster.validate()?;
        Ok(roster)
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EngineError::InvalidRoster(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), EngineError> {
        let mut ids = BTreeSet::new();
        let mut classes = BTreeSet::new();
        for card in &self.cards {
            card.validate()?;
            if !ids.insert(card.card_id) {
                return Err(EngineError::InvalidRoster(format!("duplicate card_id {}", card.card_id)));
            }
            if !classes.insert(card.class_id) {
                return Err(EngineError::InvalidRoster(format!("duplicate class_id {}", card.class_id)));
            }
        }
        for (name, deck) in &self.decks {
            self.resolve_deck(deck)
                .map_err(|e| EngineError::InvalidRoster(format!("deck {name}: {e}")))?;
        }
        Ok(())
    }

    pub fn card(&self, card_id: u32) -> Option<&CardSpec> {
        self.cards.iter().find(|c| c.card_id == card_id)
    }

    pub fn by_class(&self, class_id: u32) -> Option<&CardSpec> {
        self.cards.iter().find(|c| c.class_id == class_id)
    }

    /// The deck named `default`, or the first eight cards when the file has no decks.
    pub fn default_deck(&self) -> Vec<u32> {
        self.decks
            .get("default")
            .cloned()
            .unwrap_or_else(|| self.cards.iter().take(DECK_SIZE).map(|c| c.card_id).collect())
    }

    /// Looks up the eight cards of a deck, checking size, membership and uniqueness.
    pub fn resolve_deck(&self, deck: &[u32]) -> Result<Vec<CardSpec>, EngineError> {
        if deck.len() != DECK_SIZE {
            return Err(EngineError::DeckSize(deck.len()));
        }
        let mut seen = BTreeSet::new();
        deck.iter()
            .map(|&id| {
                if !seen.insert(id) {
                    return Err(EngineError::DuplicateCard(id));
                }
                self.card(id).cloned().ok_or(EngineError::UnknownCard(id))
            })
            .collect()
    }
}

/// Static per-class features used when densifying observations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassTraits {
    pub is_air: bool,
    pub is_building: bool,
    pub is_spell: bool,
    pub is_tower: bool,
}

impl Roster {
    pub fn class_traits(&self, class_id: u32) -> ClassTraits {
        if class_id == MAIN_TOWER_CLASS || class_id == AUX_TOWER_CLASS {
            return ClassTraits { is_tower: true, ..Default::default() };
        }
        match self.by_class(class_id).map(|c| c.kind) {
            Some(CardKind::TroopAir) => ClassTraits { is_air: true, ..Default::default() },
            Some(CardKind::Building) => ClassTraits { is_building: true, ..Default::default() },
            Some(CardKind::Spell) => ClassTraits { is_spell: true, ..Default::default() },
            _ => ClassTraits::default(),
        }
    }
}
