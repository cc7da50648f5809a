use serde::{Deserialize, Serialize};

use super::arch::{DecisionModel, Predictions};
use super::graph::{Graph, Var};
use crate::trajectory::TrajectoryWindow;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWeighting {
    /// Every window counts equally; windows are already drawn in proportion to `s_j`.
    #[default]
    Uniform,
    /// Each window is additionally scaled by its `s_j`.
    SampleWeight,
}

/// Supervision of one window step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepTarget {
    pub delay: usize,
    /// `(select, pos)` when the step is supervised on placement.
    pub placement: Option<(usize, usize)>,
}

/// Targets per step, `None` on padding.
pub fn step_targets(window: &TrajectoryWindow, discrete_action: bool) -> Vec<Option<StepTarget>> {
    let t = window.t_delay as usize;
    window
        .steps
        .iter()
        .zip(&window.pad)
        .map(|(s, &pad)| {
            if pad {
                return None;
            }
            let (delay, target) = if discrete_action {
                match s.action {
                    Some(a) => (0, Some(a)),
                    None => (t, None),
                }
            } else {
                (s.delay as usize, if (s.delay as usize) < t { s.target } else { None })
            };
            let placement = target.map(|a| (a.slot as usize - 1, a.pos_index()));
            Some(StepTarget { delay, placement })
        })
        .collect()
}

/// Correct and supervised counts per head.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HeadCounts {
    pub delay: (usize, usize),
    pub select: (usize, usize),
    pub pos: (usize, usize),
}

impl HeadCounts {
    pub fn merge(&mut self, o: HeadCounts) {
        for (a, b) in [(&mut self.delay, o.delay), (&mut self.select, o.select), (&mut self.pos, o.pos)] {
            a.0 += b.0;
            a.1 += b.1;
        }
    }

    fn ratio(c: (usize, usize)) -> f64 {
        if c.1 == 0 {
            0.0
        } else {
            c.0 as f64 / c.1 as f64
        }
    }

    pub fn delay_acc(&self) -> f64 {
        Self::ratio(self.delay)
    }

    pub fn select_acc(&self) -> f64 {
        Self::ratio(self.select)
    }

    pub fn pos_acc(&self) -> f64 {
        Self::ratio(self.pos)
    }
}

/// Builds `CE_delay + CE_pos + CE_select` for one window, each averaged over
/// the window's real steps and scaled by `scale`.
pub fn window_loss(g: &mut Graph, p: &Predictions, targets: &[Option<StepTarget>], scale: f64) -> Var {
    let n_real = targets.iter().filter(|t| t.is_some()).count().max(1) as f64;
    let w = scale / n_real;
    let delay_t: Vec<Option<usize>> = targets.iter().map(|t| t.map(|t| t.delay)).collect();
    let sel_t: Vec<Option<usize>> = targets.iter().map(|t| t.and_then(|t| t.placement).map(|p| p.0)).collect();
    let pos_t: Vec<Option<usize>> = targets.iter().map(|t| t.and_then(|t| t.placement).map(|p| p.1)).collect();
    let ws = vec![w; targets.len()];
    let d = g.cross_entropy(p.delay, delay_t, ws.clone());
    let s = g.cross_entropy(p.select, sel_t, ws.clone());
    let q = g.cross_entropy(p.pos, pos_t, ws);
    g.sum(&[d, s, q])
}

/// Argmax accuracy of each head on the supervised steps.
pub fn head_counts(g: &Graph, p: &Predictions, targets: &[Option<StepTarget>]) -> HeadCounts {
    let mut c = HeadCounts::default();
    let (dl, sl, pl) = (g.value(p.delay), g.value(p.select), g.value(p.pos));
    for (r, t) in targets.iter().enumerate() {
        let Some(t) = t else { continue };
        c.delay.1 += 1;
        c.delay.0 += (dl.argmax_row(r) == t.delay) as usize;
        if let Some((s, q)) = t.placement {
            c.select.1 += 1;
            c.select.0 += (sl.argmax_row(r) == s) as usize;
            c.pos.1 += 1;
            c.pos.0 += (pl.argmax_row(r) == q) as usize;
        }
    }
    c
}

/// Loss value and head accuracies of `model` on `windows` without gradients.
pub fn evaluate_windows(model: &DecisionModel, windows: &[TrajectoryWindow]) -> (f64, HeadCounts) {
    let mut loss = 0.0;
    let mut counts = HeadCounts::default();
    for w in windows {
        let mut g = Graph::new(&model.params);
        let p = model.forward(&mut g, w);
        let t = step_targets(w, model.cfg.discrete_action);
        let l = window_loss(&mut g, &p, &t, 1.0);
        loss += g.value(l).item();
        counts.merge(head_counts(&g, &p, &t));
    }
    (loss / windows.len().max(1) as f64, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::Params;
    use crate::model::tensor::Tensor;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_logits_give_log_class_count() {
        let params = Params::new();
        let mut g = Graph::new(&params);
        let delay = g.constant(Tensor::zeros(3, 21));
        let select = g.constant(Tensor::zeros(3, 4));
        let pos = g.constant(Tensor::zeros(3, 576));
        let p = Predictions { pos, select, delay };
        let targets = vec![
            None,
            Some(StepTarget { delay: 20, placement: None }),
            Some(StepTarget { delay: 3, placement: Some((1, 100)) }),
        ];
        let l = window_loss(&mut g, &p, &targets, 1.0);
        // two delay rows and one placement row, averaged over two real steps
        let want = 21f64.ln() + 0.5 * (4f64.ln() + 576f64.ln());
        assert_relative_eq!(g.value(l).item(), want, max_relative = 1e-12);
    }

    #[test]
    fn confident_correct_logits_give_small_loss() {
        let params = Params::new();
        let mut g = Graph::new(&params);
        let mut d = Tensor::zeros(1, 21);
        d.data[5] = 50.0;
        let mut s = Tensor::zeros(1, 4);
        s.data[2] = 50.0;
        let mut q = Tensor::zeros(1, 576);
        q.data[7] = 50.0;
        let p = Predictions { delay: g.constant(d), select: g.constant(s), pos: g.constant(q) };
        let t = vec![Some(StepTarget { delay: 5, placement: Some((2, 7)) })];
        let l = window_loss(&mut g, &p, &t, 1.0);
        assert!(g.value(l).item() < 1e-15);
        let c = head_counts(&g, &p, &t);
        assert_eq!((c.delay_acc(), c.select_acc(), c.pos_acc()), (1.0, 1.0, 1.0));
    }
}
