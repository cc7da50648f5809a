#![allow(dead_code)]

pub mod grads;

use cardarena::engine::GRID_LEN;
use cardarena::model::{Arch, DecisionModel, Graph, ModelConfig, Predictions};
use cardarena::trajectory::{Action, TrajectoryWindow, WindowStep};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const T_DELAY: u32 = 20;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_action(rng: &mut impl Rng) -> Action {
    Action { slot: rng.random_range(1..=4), x: rng.random_range(0..18), y: rng.random_range(0..32) }
}

/// A step with a sparse random grid and consistent delay/target labels.
pub fn random_step(rng: &mut impl Rng) -> WindowStep {
    let mut grid = vec![0.0; GRID_LEN];
    for _ in 0..40 {
        let i = rng.random_range(0..GRID_LEN);
        grid[i] = rng.random_range(-1.0..1.0);
    }
    let mut cards: Vec<u8> = (1..=8).collect();
    cards.shuffle(rng);
    let delay = rng.random_range(0..=T_DELAY);
    let target = (delay < T_DELAY).then(|| random_action(rng));
    WindowStep {
        rtg: rng.random_range(-5.0..5.0),
        grid,
        hand: [cards[0], cards[1], cards[2], cards[3]],
        costs: [rng.random_range(1..=9), rng.random_range(1..=9), rng.random_range(1..=9), rng.random_range(1..=9)],
        elixir: rng.random_range(0..=280) as f64 / 28.0,
        t_seconds: rng.random_range(0..3000) as f64 / 10.0,
        action: if delay == 0 { target } else { None },
        prev_action: rng.random_bool(0.3).then(|| random_action(rng)),
        delay,
        target,
    }
}

pub fn random_window(l: usize, n_pad: usize, rng: &mut impl Rng) -> TrajectoryWindow {
    let mut steps: Vec<WindowStep> = (0..n_pad).map(|_| WindowStep::padding(T_DELAY)).collect();
    steps.extend((n_pad..l).map(|_| random_step(rng)));
    let mut pad = vec![true; n_pad];
    pad.resize(l, false);
    TrajectoryWindow { steps, pad, weight: 1.0, t_delay: T_DELAY, episode: 0, end: l - 1 }
}

pub fn toy_config(arch: Arch, l: usize) -> ModelConfig {
    ModelConfig { arch, l, d_model: 16, n_heads: 2, n_layers: 2, ff_mult: 2, t_delay: T_DELAY, seed: 3, ..ModelConfig::default() }
}

/// Logits of all three heads, flattened row-major.
pub struct Logits {
    pub pos: Vec<Vec<f64>>,
    pub select: Vec<Vec<f64>>,
    pub delay: Vec<Vec<f64>>,
}

pub fn logits(model: &DecisionModel, w: &TrajectoryWindow) -> Logits {
    let mut g = Graph::new(&model.params);
    let p: Predictions = model.forward(&mut g, w);
    let rows = |v| {
        let t = g.value(v);
        (0..t.rows).map(|r| t.row(r).to_vec()).collect()
    };
    Logits { pos: rows(p.pos), select: rows(p.select), delay: rows(p.delay) }
}

/// Replaces every input of step `k` with a fresh random step.
pub fn perturb_step(w: &TrajectoryWindow, k: usize, rng: &mut impl Rng) -> TrajectoryWindow {
    let mut out = w.clone();
    out.steps[k] = random_step(rng);
    out
}

/// Runs `trials` perturbations of a random future step and returns how many
/// left every earlier step's logits bit-identical.
pub fn causality_trials(arch: Arch, l: usize, trials: usize, seed: u64) -> usize {
    let model = DecisionModel::new(toy_config(arch, l)).unwrap();
    let mut r = rng(seed);
    let mut ok = 0;
    for _ in 0..trials {
        let w = random_window(l, 0, &mut r);
        let k = r.random_range(1..l);
        let p = perturb_step(&w, k, &mut r);
        let (a, b) = (logits(&model, &w), logits(&model, &p));
        let same = (0..k).all(|t| a.pos[t] == b.pos[t] && a.select[t] == b.select[t] && a.delay[t] == b.delay[t]);
        ok += same as usize;
    }
    ok
}
