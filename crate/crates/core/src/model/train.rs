use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::DecisionModel;
use super::graph::{Graph, Grads};
use super::loss::{head_counts, step_targets, window_loss, HeadCounts, LossWeighting};
use super::optim::{clip_grad_norm, Optimizer, OptimizerConfig};
use super::ModelError;
use crate::trajectory::{random_perm, reshuffle_cards, Dataset, TrajectoryWindow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub grad_clip: f64,
    /// Probability that a sampled window gets its card labels permuted.
    pub p_shuffle: f64,
    pub loss_weighting: LossWeighting,
    pub seed: u64,
    /// Metrics are averaged over this many steps per emitted line.
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 8,
            optimizer: OptimizerConfig::default(),
            grad_clip: 1.0,
            p_shuffle: 0.5,
            loss_weighting: LossWeighting::Uniform,
            seed: 0,
            log_every: 50,
        }
    }
}

/// One metrics JSONL record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsLine {
    pub step: u64,
    pub loss: f64,
    pub delay_acc: f64,
    pub select_acc: f64,
    pub pos_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: u64,
    pub metrics: Vec<MetricsLine>,
    pub final_loss: f64,
}

/// Loss gradient and head counts of one batch; the loss is the batch mean.
pub fn batch_gradients(model: &DecisionModel, batch: &[TrajectoryWindow], weighting: LossWeighting, mean_weight: f64) -> (f64, Grads, HeadCounts) {
    let mut total = 0.0;
    let mut grads = Grads { params: vec![None; model.params.len()] };
    let mut counts = HeadCounts::default();
    for w in batch {
        let scale = match weighting {
            LossWeighting::Uniform => 1.0,
            LossWeighting::SampleWeight => w.weight / mean_weight,
        } / batch.len() as f64;
        let mut g = Graph::new(&model.params);
        let p = model.forward(&mut g, w);
        let t = step_targets(w, model.cfg.discrete_action);
        let loss = window_loss(&mut g, &p, &t, scale);
        total += g.value(loss).item();
        counts.merge(head_counts(&g, &p, &t));
        grads.accumulate(g.backward(loss));
    }
    (total, grads, counts)
}

pub struct Trainer {
    pub cfg: TrainConfig,
    opt: Optimizer,
    rng: ChaCha8Rng,
    step: u64,
    mean_weight: f64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, model: &DecisionModel, data: &Dataset) -> Result<Self, ModelError> {
        if cfg.batch_size == 0 || !(0.0..=1.0).contains(&cfg.p_shuffle) || !(cfg.grad_clip > 0.0) {
            return Err(ModelError::InvalidConfig("batch_size, p_shuffle or grad_clip out of range".into()));
        }
        if data.t_delay != model.cfg.t_delay {
            return Err(ModelError::InvalidConfig("dataset and model disagree on t_delay".into()));
        }
        let raw = data.weights.raw.iter().flatten();
        let mean_weight = raw.clone().sum::<f64>() / raw.count().max(1) as f64;
        Ok(Self {
            opt: Optimizer::new(cfg.optimizer, &model.params),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            step: 0,
            mean_weight,
            cfg,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn sample_batch(&mut self, model: &DecisionModel, data: &Dataset) -> Vec<TrajectoryWindow> {
        (0..self.cfg.batch_size)
            .map(|_| {
                let w = data.sample_training_window(model.cfg.l, &mut self.rng);
                if self.rng.random_bool(self.cfg.p_shuffle) {
                    let perm = random_perm(&mut self.rng);
                    reshuffle_cards(&w, &perm).expect("random_perm is a bijection")
                } else {
                    w
                }
            })
            .collect()
    }

    /// One optimizer update; returns the batch loss and head counts.
    pub fn train_step(&mut self, model: &mut DecisionModel, data: &Dataset) -> Result<(f64, HeadCounts), ModelError> {
        let batch = self.sample_batch(model, data);
        let (loss, mut grads, counts) = batch_gradients(model, &batch, self.cfg.loss_weighting, self.mean_weight);
        self.step += 1;
        let norm = clip_grad_norm(&mut grads, self.cfg.grad_clip);
        if !loss.is_finite() || !norm.is_finite() {
            return Err(ModelError::Divergence { step: self.step });
        }
        self.opt.step(&mut model.params, &grads);
        Ok((loss, counts))
    }
}

/// Runs `cfg.steps` updates, writing averaged metrics lines to `metrics`.
pub fn train(model: &mut DecisionModel, data: &Dataset, cfg: TrainConfig, mut metrics: Option<&mut dyn Write>) -> Result<TrainReport, ModelError> {
    let log_every = cfg.log_every.max(1);
    let steps = cfg.steps;
    let mut trainer = Trainer::new(cfg, model, data)?;
    let mut lines = Vec::new();
    let (mut acc_loss, mut acc_n, mut acc_counts) = (0.0, 0u64, HeadCounts::default());
    let mut final_loss = f64::NAN;
    for _ in 0..steps {
        let (loss, counts) = trainer.train_step(model, data)?;
        final_loss = loss;
        acc_loss += loss;
        acc_n += 1;
        acc_counts.merge(counts);
        let step = trainer.step_count();
        if step % log_every == 0 || step == steps {
            let line = MetricsLine {
                step,
                loss: acc_loss / acc_n as f64,
                delay_acc: acc_counts.delay_acc(),
                select_acc: acc_counts.select_acc(),
                pos_acc: acc_counts.pos_acc(),
            };
            if let Some(w) = metrics.as_mut() {
                serde_json::to_writer(&mut **w, &line).map_err(std::io::Error::from)?;
                w.write_all(b"\n")?;
            }
            log::info!("step {step} loss {:.4} delay_acc {:.3}", line.loss, line.delay_acc);
            lines.push(line);
            (acc_loss, acc_n, acc_counts) = (0.0, 0, HeadCounts::default());
        }
    }
    Ok(TrainReport { steps, metrics: lines, final_loss })
}
