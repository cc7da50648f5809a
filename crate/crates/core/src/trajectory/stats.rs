use serde::{Deserialize, Serialize};

use super::labels::raw_delays;
use super::{Episode, TrajectoryError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub episodes: usize,
    pub frames: usize,
    pub action_frames: usize,
    pub r_a: f64,
    /// Mean uncapped distance to the next action frame over frames that have one.
    pub mean_action_delay: f64,
    /// `1 / r_a`; absent without action frames.
    pub action_weight: Option<f64>,
    /// `1 / (1 - r_a)`; absent when every frame is an action frame.
    pub floor_weight: Option<f64>,
    pub t_delay: u32,
    pub mean_duration_s: f64,
    pub mean_return: f64,
}

pub fn dataset_stats(episodes: &[Episode], t_delay: u32) -> Result<DatasetStats, TrajectoryError> {
    let frames: usize = episodes.iter().map(|e| e.frames.len()).sum();
    if frames == 0 {
        return Err(TrajectoryError::EmptyDataset);
    }
    let action_frames: usize = episodes.iter().map(|e| e.action_count()).sum();
    let r_a = action_frames as f64 / frames as f64;
    let (mut delay_sum, mut delay_n) = (0usize, 0usize);
    for e in episodes {
        let act: Vec<bool> = e.frames.iter().map(|f| f.is_action_frame()).collect();
        for d in raw_delays(&act).into_iter().flatten() {
            delay_sum += d;
            delay_n += 1;
        }
    }
    let n = episodes.len() as f64;
    Ok(DatasetStats {
        episodes: episodes.len(),
        frames,
        action_frames,
        r_a,
        mean_action_delay: if delay_n == 0 { 0.0 } else { delay_sum as f64 / delay_n as f64 },
        action_weight: (action_frames > 0).then(|| 1.0 / r_a),
        floor_weight: (action_frames < frames).then(|| 1.0 / (1.0 - r_a)),
        t_delay,
        mean_duration_s: episodes.iter().map(|e| e.t_end).sum::<f64>() / n,
        mean_return: episodes.iter().map(|e| e.total_reward()).sum::<f64>() / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::synthetic_episode;

    #[test]
    fn four_in_a_hundred() {
        let mut act = vec![false; 100];
        for i in [10, 30, 50, 70] {
            act[i] = true;
        }
        let s = dataset_stats(&[synthetic_episode(&act)], 20).unwrap();
        assert_eq!(s.r_a, 0.04);
        assert_eq!(s.action_frames, 4);
        // frames 0..=70 have a next action; distances 10..0 repeat
        let expect = (0..=10).sum::<usize>() as f64 + 3.0 * (0..20).sum::<usize>() as f64;
        assert!((s.mean_action_delay - expect / 71.0).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_errors() {
        assert!(matches!(dataset_stats(&[], 20), Err(TrajectoryError::EmptyDataset)));
    }
}
