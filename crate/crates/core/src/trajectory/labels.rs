use serde::{Deserialize, Serialize};

use super::{Episode, TrajectoryError};

/// Suffix sums: `R[i] = r[i] + r[i+1] + ...`, so `R[0]` is the episode return
/// and `R[i] = R[i+1] + r[i]`. Undiscounted.
pub fn returns_to_go(rewards: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for i in (0..rewards.len()).rev() {
        acc += rewards[i];
        out[i] = acc;
    }
    out
}

/// `min(j - i, t_delay)` with `j` the nearest action frame at or after `i`;
/// `t_delay` when no action follows.
pub fn delay_labels(is_action: &[bool], t_delay: u32) -> Vec<u32> {
    assert!(t_delay >= 1, "t_delay must be positive");
    let mut out = vec![t_delay; is_action.len()];
    let mut next: Option<usize> = None;
    for i in (0..is_action.len()).rev() {
        if is_action[i] {
            next = Some(i);
        }
        if let Some(j) = next {
            out[i] = ((j - i) as u64).min(t_delay as u64) as u32;
        }
    }
    out
}

/// Uncapped distance to the next action frame, `None` after the last one.
pub(crate) fn raw_delays(is_action: &[bool]) -> Vec<Option<usize>> {
    let mut out = vec![None; is_action.len()];
    let mut next = None;
    for i in (0..is_action.len()).rev() {
        if is_action[i] {
            next = Some(i);
        }
        out[i] = next.map(|j| j - i);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWeights {
    pub r_a: f64,
    /// Raw `s_j` per episode and frame.
    pub raw: Vec<Vec<f64>>,
    /// `s_j / sum(s)` in dataset order.
    pub normalized: Vec<f64>,
}

impl SampleWeights {
    pub fn action_weight(&self) -> f64 {
        1.0 / self.r_a
    }

    pub fn floor_weight(&self) -> f64 {
        1.0 / (1.0 - self.r_a)
    }
}

/// `s_j = max(1/(1-r_a), 1/(r_a (j - t_i + 1)))` over the span that starts at
/// action frame `t_i`. Frames before an episode's first action get the floor.
/// Fails when the dataset has no action frame.
pub fn sample_weights(episodes: &[Episode]) -> Result<SampleWeights, TrajectoryError> {
    let n: usize = episodes.iter().map(|e| e.frames.len()).sum();
    let n_action: usize = episodes.iter().map(|e| e.action_count()).sum();
    if n_action == 0 {
        return Err(TrajectoryError::NoActionFrames);
    }
    let r_a = n_action as f64 / n as f64;
    // every frame an action frame: the floor term is undefined and unused
    let floor = if n_action == n { 0.0 } else { 1.0 / (1.0 - r_a) };
    let raw: Vec<Vec<f64>> = episodes
        .iter()
        .map(|e| {
            let mut last: Option<usize> = None;
            e.frames
                .iter()
                .enumerate()
                .map(|(j, f)| {
                    if f.is_action_frame() {
                        last = Some(j);
                    }
                    match last {
                        Some(t) => floor.max(1.0 / (r_a * (j - t + 1) as f64)),
                        None => floor,
                    }
                })
                .collect()
        })
        .collect();
    let total: f64 = raw.iter().flatten().sum();
    let normalized = raw.iter().flatten().map(|s| s / total).collect();
    Ok(SampleWeights { r_a, raw, normalized })
}
