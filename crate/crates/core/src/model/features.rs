//! Fixed numeric encodings of one window step.

use std::f64::consts::TAU;

use crate::engine::{CHANNELS, ELIXIR_UNITS, GRID_H, GRID_W, MAX_ELIXIR_UNITS};
use crate::trajectory::{Action, WindowStep};

use super::tensor::Tensor;
use super::ModelError;

pub const ACTION_FEATURES: usize = 7;
const HAND_CLASSES: usize = 9;
const ELIXIR_LEVELS: usize = MAX_ELIXIR_UNITS as usize;
const TIME_FEATURES: usize = 5;
/// Hand one-hot, slot costs, elixir scalar, elixir level code, clock.
pub const CARD_FEATURES: usize = 4 * HAND_CLASSES + 4 + 1 + ELIXIR_LEVELS + TIME_FEATURES;

/// `[is_action, slot one-hot(4), x / 17, y / 31]`, all zero without an action.
pub fn action_features(a: Option<Action>, out: &mut [f64]) {
    out[..ACTION_FEATURES].fill(0.0);
    if let Some(a) = a {
        out[0] = 1.0;
        out[a.slot as usize] = 1.0;
        out[5] = a.x as f64 / (GRID_W - 1) as f64;
        out[6] = a.y as f64 / (GRID_H - 1) as f64;
    }
}

/// Card-state features. Elixir appears both as a scalar and as a thermometer
/// code over its 1/28 units, so exact elixir levels are linearly separable.
/// The clock carries sine/cosine pairs with 1 s and 10 s periods.
pub fn card_features(s: &WindowStep, out: &mut [f64]) {
    out[..CARD_FEATURES].fill(0.0);
    for (slot, &c) in s.hand.iter().enumerate() {
        out[slot * HAND_CLASSES + c as usize] = 1.0;
    }
    let mut o = 4 * HAND_CLASSES;
    for (slot, &c) in s.costs.iter().enumerate() {
        out[o + slot] = c as f64 / 10.0;
    }
    o += 4;
    out[o] = s.elixir / 10.0;
    o += 1;
    let units = (s.elixir * ELIXIR_UNITS as f64).round().clamp(0.0, ELIXIR_LEVELS as f64) as usize;
    out[o..o + units].fill(1.0);
    o += ELIXIR_LEVELS;
    let t = s.t_seconds;
    out[o] = t / 300.0;
    out[o + 1] = (TAU * t).sin();
    out[o + 2] = (TAU * t).cos();
    out[o + 3] = (TAU * t / 10.0).sin();
    out[o + 4] = (TAU * t / 10.0).cos();
}

/// Splits a dense grid into non-overlapping `p x p` patches. Tokens run over
/// x-blocks then y-blocks; each token lists its cells in `(dx, dy)` order with
/// all channels per cell.
pub fn patchify(grid: &[f64], p: usize) -> Result<Tensor, ModelError> {
    if p == 0 || !GRID_W.is_multiple_of(p) || !GRID_H.is_multiple_of(p) {
        return Err(ModelError::NonDivisiblePatch(p));
    }
    assert_eq!(grid.len(), GRID_W * GRID_H * CHANNELS, "patchify: grid size");
    let (bx, by) = (GRID_W / p, GRID_H / p);
    let dim = p * p * CHANNELS;
    let mut out = Tensor::zeros(bx * by, dim);
    for i in 0..bx {
        for j in 0..by {
            let row = out.row_mut(i * by + j);
            for dx in 0..p {
                for dy in 0..p {
                    let src = ((i * p + dx) * GRID_H + j * p + dy) * CHANNELS;
                    let dst = (dx * p + dy) * CHANNELS;
                    row[dst..dst + CHANNELS].copy_from_slice(&grid[src..src + CHANNELS]);
                }
            }
        }
    }
    Ok(out)
}

pub fn patch_count(p: usize) -> usize {
    (GRID_W / p) * (GRID_H / p)
}
