use super::{Action, Episode, EpisodeHeader, EpisodeOutcome, Frame, Source};
use crate::engine::TICK_HZ;
use crate::rewards::RewardBreakdown;

/// A schema-valid episode with the given action pattern and zero rewards.
/// Placements go to slot 1 at (8, 4); useful for label and weight arithmetic.
pub fn synthetic_episode(is_action: &[bool]) -> Episode {
    let deck: Vec<u32> = (1..=8).collect();
    let frames = is_action
        .iter()
        .enumerate()
        .map(|(t, &a)| Frame {
            tick: t as u64,
            units: Vec::new(),
            hand: [1, 2, 3, 4],
            elixir: 5.0,
            action: a.then_some(Action { slot: 1, x: 8, y: 4 }),
            opp: None,
            reward: RewardBreakdown::default(),
        })
        .collect();
    let mut header = EpisodeHeader::new([deck.clone(), deck], 0, Source::Bot, 0);
    header.opponent_log = false;
    Episode { header, frames, outcome: EpisodeOutcome::Draw, t_end: is_action.len() as f64 / TICK_HZ as f64 }
}
