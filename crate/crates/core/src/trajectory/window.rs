use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;

use super::labels::{delay_labels, returns_to_go, sample_weights, SampleWeights};
use super::{Action, Episode, TrajectoryError};
use crate::engine::{densify, Roster, GRID_LEN};

#[derive(Debug, Clone, PartialEq)]
pub struct WindowStep {
    pub rtg: f64,
    /// Dense `18 x 32 x 15` grid.
    pub grid: Vec<f64>,
    /// Deck-local card ids per slot, `0` for an empty slot.
    pub hand: [u8; 4],
    /// Elixir cost per slot; follows the slot, not the card label.
    pub costs: [u8; 4],
    pub elixir: f64,
    pub t_seconds: f64,
    pub action: Option<Action>,
    pub prev_action: Option<Action>,
    pub delay: u32,
    /// The upcoming action when `delay < t_delay`.
    pub target: Option<Action>,
}

impl WindowStep {
    pub fn padding(t_delay: u32) -> Self {
        Self {
            rtg: 0.0,
            grid: vec![0.0; GRID_LEN],
            hand: [0; 4],
            costs: [0; 4],
            elixir: 0.0,
            t_seconds: 0.0,
            action: None,
            prev_action: None,
            delay: t_delay,
            target: None,
        }
    }
}

/// `L` consecutive steps ending at frame `end`, left-padded.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWindow {
    pub steps: Vec<WindowStep>,
    /// `true` on padding steps.
    pub pad: Vec<bool>,
    pub weight: f64,
    pub t_delay: u32,
    pub episode: usize,
    pub end: usize,
}

impl TrajectoryWindow {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn real_steps(&self) -> usize {
        self.pad.iter().filter(|p| !**p).count()
    }
}

/// Episodes with their precomputed training targets and sampler.
pub struct Dataset {
    pub episodes: Vec<Episode>,
    pub roster: Roster,
    pub t_delay: u32,
    pub weights: SampleWeights,
    rtg: Vec<Vec<f64>>,
    delays: Vec<Vec<u32>>,
    targets: Vec<Vec<Option<Action>>>,
    costs: Vec<Vec<u8>>,
    offsets: Vec<usize>,
    sampler: WeightedIndex<f64>,
}

impl Dataset {
    pub fn new(episodes: Vec<Episode>, roster: Roster, t_delay: u32) -> Result<Self, TrajectoryError> {
        if episodes.iter().all(|e| e.frames.is_empty()) {
            return Err(TrajectoryError::EmptyDataset);
        }
        let weights = sample_weights(&episodes)?;
        let rtg = episodes.iter().map(|e| returns_to_go(&e.rewards())).collect();
        let mut delays = Vec::with_capacity(episodes.len());
        let mut targets = Vec::with_capacity(episodes.len());
        for e in &episodes {
            let act: Vec<bool> = e.frames.iter().map(|f| f.is_action_frame()).collect();
            let d = delay_labels(&act, t_delay);
            let t = d
                .iter()
                .enumerate()
                .map(|(i, &k)| (k < t_delay).then(|| e.frames[i + k as usize].action).flatten())
                .collect();
            delays.push(d);
            targets.push(t);
        }
        let costs = episodes.iter().map(|e| e.deck_costs(&roster)).collect();
        let mut offsets = vec![0];
        for e in &episodes {
            offsets.push(offsets.last().unwrap() + e.frames.len());
        }
        let sampler = WeightedIndex::new(&weights.normalized).map_err(|_| TrajectoryError::NoActionFrames)?;
        Ok(Self { episodes, roster, t_delay, weights, rtg, delays, targets, costs, offsets, sampler })
    }

    pub fn frames(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn delays(&self, episode: usize) -> &[u32] {
        &self.delays[episode]
    }

    pub fn returns(&self, episode: usize) -> &[f64] {
        &self.rtg[episode]
    }

    /// Draws an ending frame from the normalized `s_j` distribution.
    pub fn sample_end(&self, rng: &mut impl Rng) -> (usize, usize) {
        let flat = self.sampler.sample(rng);
        let ep = self.offsets.partition_point(|&o| o <= flat) - 1;
        (ep, flat - self.offsets[ep])
    }

    pub fn sample_training_window(&self, l: usize, rng: &mut impl Rng) -> TrajectoryWindow {
        let (ep, end) = self.sample_end(rng);
        self.window(ep, end, l)
    }

    pub fn window(&self, ep: usize, end: usize, l: usize) -> TrajectoryWindow {
        let e = &self.episodes[ep];
        let start = (end + 1).saturating_sub(l);
        let n_pad = l - (end + 1 - start);
        let mut steps: Vec<WindowStep> = (0..n_pad).map(|_| WindowStep::padding(self.t_delay)).collect();
        let costs = &self.costs[ep];
        for i in start..=end {
            let f = &e.frames[i];
            steps.push(WindowStep {
                rtg: self.rtg[ep][i],
                grid: densify(&f.units, &self.roster),
                hand: f.hand,
                costs: f.hand.map(|c| if c == 0 { 0 } else { costs[c as usize - 1] }),
                elixir: f.elixir,
                t_seconds: f.tick as f64 / e.header.tick_hz as f64,
                action: f.action,
                prev_action: if i == 0 { None } else { e.frames[i - 1].action },
                delay: self.delays[ep][i],
                target: self.targets[ep][i],
            });
        }
        let mut pad = vec![true; n_pad];
        pad.resize(l, false);
        TrajectoryWindow { steps, pad, weight: self.weights.raw[ep][end], t_delay: self.t_delay, episode: ep, end }
    }

    /// Episode return at quantile `q` of the dataset (nearest rank).
    pub fn return_quantile(&self, q: f64) -> f64 {
        let mut r: Vec<f64> = self.rtg.iter().map(|x| x.first().copied().unwrap_or(0.0)).collect();
        r.sort_by(f64::total_cmp);
        let k = ((q.clamp(0.0, 1.0) * r.len() as f64).ceil() as usize).clamp(1, r.len());
        r[k - 1]
    }
}

pub fn identity_perm() -> [u8; 8] {
    [1, 2, 3, 4, 5, 6, 7, 8]
}

pub fn random_perm(rng: &mut impl Rng) -> [u8; 8] {
    let mut p = identity_perm();
    p.shuffle(rng);
    p
}

/// Relabels every hand card `c` as `perm[c - 1]`. Actions name slots, so they
/// keep pointing at the same physical card.
pub fn reshuffle_cards(window: &TrajectoryWindow, perm: &[u8; 8]) -> Result<TrajectoryWindow, TrajectoryError> {
    let mut seen = [false; 8];
    for &p in perm {
        if !(1..=8).contains(&p) || std::mem::replace(&mut seen[p as usize - 1], true) {
            return Err(TrajectoryError::NonBijective);
        }
    }
    let mut out = window.clone();
    for s in &mut out.steps {
        s.hand = s.hand.map(|c| if c == 0 { 0 } else { perm[c as usize - 1] });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::synthetic_episode;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ds(act: &[bool]) -> Dataset {
        Dataset::new(vec![synthetic_episode(act)], Roster::builtin(), 20).unwrap()
    }

    #[test]
    fn single_frame_window() {
        let d = ds(&[true]);
        let w = d.sample_training_window(1, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(w.len(), 1);
        assert_eq!(w.pad, vec![false]);
        assert_eq!(w.steps[0].delay, 0);
    }

    #[test]
    fn short_prefix_is_left_padded() {
        let d = ds(&[false, true, false, false]);
        let w = d.window(0, 1, 3);
        assert_eq!(w.pad, vec![true, false, false]);
        assert_eq!(w.steps[0], WindowStep::padding(20));
        assert_eq!(w.steps[1].delay, 1);
        assert_eq!(w.steps[1].target, Some(Action { slot: 1, x: 8, y: 4 }));
        assert_eq!(w.steps[2].delay, 0);
        assert_eq!(w.steps[2].prev_action, None);
        let w = d.window(0, 2, 3);
        assert_eq!(w.steps[2].prev_action, Some(Action { slot: 1, x: 8, y: 4 }));
        assert_eq!(w.steps[2].target, None);
    }

    #[test]
    fn sampler_follows_weights() {
        // r_a = 1/4: weights 4/3, 4, 2, 4/3
        let d = ds(&[false, true, false, false]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 4];
        let n = 200_000;
        for _ in 0..n {
            counts[d.sample_end(&mut rng).1] += 1;
        }
        let total = 4.0 / 3.0 + 4.0 + 2.0 + 4.0 / 3.0;
        for (c, w) in counts.iter().zip([4.0 / 3.0, 4.0, 2.0, 4.0 / 3.0]) {
            let p = *c as f64 / n as f64;
            assert!((p - w / total).abs() < 0.005, "{p} vs {}", w / total);
        }
    }

    #[test]
    fn reshuffle_swap_example() {
        let d = ds(&[true, false]);
        let mut w = d.window(0, 0, 1);
        w.steps[0].hand = [1, 3, 2, 4];
        w.steps[0].action = Some(Action { slot: 1, x: 2, y: 2 });
        let mut perm = identity_perm();
        perm.swap(0, 1);
        let out = reshuffle_cards(&w, &perm).unwrap();
        assert_eq!(out.steps[0].hand, [2, 3, 1, 4]);
        assert_eq!(out.steps[0].action, Some(Action { slot: 1, x: 2, y: 2 }));
        assert_eq!(out.steps[0].costs, w.steps[0].costs);
        assert_eq!(reshuffle_cards(&w, &identity_perm()).unwrap(), w);
    }

    #[test]
    fn reshuffle_rejects_non_bijection() {
        let d = ds(&[true]);
        let w = d.window(0, 0, 1);
        assert!(matches!(reshuffle_cards(&w, &[1, 1, 3, 4, 5, 6, 7, 8]), Err(TrajectoryError::NonBijective)));
        assert!(matches!(reshuffle_cards(&w, &[0, 2, 3, 4, 5, 6, 7, 8]), Err(TrajectoryError::NonBijective)));
    }

    #[test]
    fn return_quantile_nearest_rank() {
        let mut eps = Vec::new();
        for k in 0..10 {
            let mut e = synthetic_episode(&[true]);
            e.frames[0].reward.tower = k as f64;
            eps.push(e);
        }
        let d = Dataset::new(eps, Roster::builtin(), 20).unwrap();
        assert_eq!(d.return_quantile(0.9), 8.0);
        assert_eq!(d.return_quantile(1.0), 9.0);
    }

    proptest! {
        #[test]
        fn reshuffle_round_trip(seed in any::<u64>(), hand in prop::array::uniform4(0u8..=8)) {
            let d = ds(&[true, false, false]);
            let mut w = d.window(0, 2, 4);
            w.steps[3].hand = hand;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let perm = random_perm(&mut rng);
            let mut inv = [0u8; 8];
            for (i, &p) in perm.iter().enumerate() {
                inv[p as usize - 1] = i as u8 + 1;
            }
            let there = reshuffle_cards(&w, &perm).unwrap();
            // the slot still holds the same physical card
            for (a, b) in w.steps.iter().zip(&there.steps) {
                for s in 0..4 {
                    prop_assert_eq!(a.hand[s] == 0, b.hand[s] == 0);
                    if a.hand[s] != 0 {
                        prop_assert_eq!(perm[a.hand[s] as usize - 1], b.hand[s]);
                    }
                }
            }
            prop_assert_eq!(reshuffle_cards(&there, &inv).unwrap(), w);
        }
    }
}
