//! The three sequence decision architectures.
//!
//! StARformer variants run a per-step spatial encoder over
//! `[a_{t-1}, R_t, card_t, patches_t]` and inject its pooled summary `l_t^n`
//! into temporal layer `n + 1`. DT-4L has only the temporal stack over
//! `[a_{t-1}, R_t, img_t, card_t]`.

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{GRID_H, GRID_LEN, GRID_W};
use crate::trajectory::{TrajectoryWindow, WindowStep};

use super::features::{action_features, card_features, patch_count, patchify, ACTION_FEATURES, CARD_FEATURES};
use super::graph::{Graph, MaskMode, Var};
use super::mask::{local_mask, MaskMatrix};
use super::params::Params;
use super::tensor::Tensor;
use super::ModelError;

pub const POS_CLASSES: usize = GRID_W * GRID_H;
pub const SELECT_CLASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arch {
    #[serde(rename = "starformer_3l")]
    StARformer3L,
    #[serde(rename = "starformer_2l")]
    StARformer2L,
    #[serde(rename = "dt_4l")]
    DT4L,
}

impl Arch {
    /// Temporal tokens per step.
    pub fn tokens_per_step(self) -> usize {
        match self {
            Arch::StARformer3L => 3,
            Arch::StARformer2L => 2,
            Arch::DT4L => 4,
        }
    }

    pub fn has_spatial(self) -> bool {
        self != Arch::DT4L
    }

    pub fn all() -> [Arch; 3] {
        [Arch::StARformer3L, Arch::StARformer2L, Arch::DT4L]
    }
}

impl std::str::FromStr for Arch {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "starformer_3l" | "starformer3l" | "3l" => Ok(Arch::StARformer3L),
            "starformer_2l" | "starformer2l" | "2l" => Ok(Arch::StARformer2L),
            "dt_4l" | "dt4l" | "4l" | "dt" => Ok(Arch::DT4L),
            other => Err(format!("unknown architecture '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    /// Context length in steps.
    pub l: usize,
    pub d_model: usize,
    pub n_heads: usize,
    /// Temporal layers; StARformer variants also use `n_layers - 1` spatial layers.
    pub n_layers: usize,
    pub patch_size: usize,
    pub t_delay: u32,
    pub ff_mult: usize,
    /// Returns-to-go are divided by this before embedding.
    pub rtg_scale: f64,
    pub mask_mode: MaskMode,
    /// Act/no-act supervision instead of delay classes.
    pub discrete_action: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: Arch::StARformer3L,
            l: 30,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            patch_size: 2,
            t_delay: crate::trajectory::DEFAULT_T_DELAY,
            ff_mult: 4,
            rtg_scale: 10.0,
            mask_mode: MaskMode::NegInf,
            discrete_action: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.l == 0 {
            return bad("l must be at least 1");
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad("d_model must be divisible by n_heads");
        }
        if self.n_layers == 0 || self.ff_mult == 0 {
            return bad("n_layers and ff_mult must be positive");
        }
        if self.t_delay == 0 {
            return bad("t_delay must be positive");
        }
        if !(self.rtg_scale > 0.0) {
            return bad("rtg_scale must be positive");
        }
        if self.patch_size == 0 || !GRID_W.is_multiple_of(self.patch_size) || !GRID_H.is_multiple_of(self.patch_size) {
            return Err(ModelError::NonDivisiblePatch(self.patch_size));
        }
        Ok(())
    }

    pub fn delay_classes(&self) -> usize {
        self.t_delay as usize + 1
    }

    fn spatial_tokens(&self) -> usize {
        3 + patch_count(self.patch_size)
    }
}

/// Per-step logits, one row per window step.
#[derive(Debug, Clone, Copy)]
pub struct Predictions {
    pub pos: Var,
    pub select: Var,
    pub delay: Var,
}

/// Numeric inputs of a run of steps, stacked row-wise.
pub struct StepInputs {
    pub n: usize,
    pub act: Tensor,
    pub rtg: Tensor,
    pub card: Tensor,
    pub grid: Tensor,
    pub patches: Option<Tensor>,
}

/// Per-step embeddings that do not depend on the step's position in the window.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEncoding {
    pub img: Vec<f64>,
    pub card: Vec<f64>,
    pub act: Vec<f64>,
    pub rtg: Vec<f64>,
    /// `l^0 .. l^{n_layers-1}`; empty for DT-4L.
    pub local: Vec<Vec<f64>>,
}

struct StepVars {
    img: Var,
    card: Var,
    act: Option<Var>,
    rtg: Option<Var>,
    local: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionModel {
    pub cfg: ModelConfig,
    pub params: Params,
}

fn block_params(p: &mut Params, prefix: &str, d: usize, ff: usize, rng: &mut ChaCha8Rng) {
    p.add_filled(format!("{prefix}.ln1.g"), 1, d, 1.0);
    p.add_filled(format!("{prefix}.ln1.b"), 1, d, 0.0);
    for w in ["wq", "wk", "wv", "wo"] {
        p.add_glorot(format!("{prefix}.{w}"), d, d, rng);
    }
    p.add_filled(format!("{prefix}.bo"), 1, d, 0.0);
    p.add_filled(format!("{prefix}.ln2.g"), 1, d, 1.0);
    p.add_filled(format!("{prefix}.ln2.b"), 1, d, 0.0);
    p.add_glorot(format!("{prefix}.ff1.w"), d, ff, rng);
    p.add_filled(format!("{prefix}.ff1.b"), 1, ff, 0.0);
    p.add_glorot(format!("{prefix}.ff2.w"), ff, d, rng);
    p.add_filled(format!("{prefix}.ff2.b"), 1, d, 0.0);
}

fn linear_params(p: &mut Params, prefix: &str, input: usize, out: usize, rng: &mut ChaCha8Rng) {
    p.add_glorot(format!("{prefix}.w"), input, out, rng);
    p.add_filled(format!("{prefix}.b"), 1, out, 0.0);
}

impl DecisionModel {
    /// Fresh parameters drawn from `cfg.seed`.
    pub fn new(cfg: ModelConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = cfg.d_model;
        let ff = d * cfg.ff_mult;
        let k = cfg.arch.tokens_per_step();
        let mut p = Params::new();
        linear_params(&mut p, "tm.img", GRID_LEN, d, &mut rng);
        linear_params(&mut p, "tm.card", CARD_FEATURES, d, &mut rng);
        p.add_uniform("tm.pos", cfg.l, d, 0.02, &mut rng);
        p.add_uniform("tm.type", k, d, 0.02, &mut rng);
        if cfg.arch == Arch::DT4L {
            linear_params(&mut p, "tm.act", ACTION_FEATURES, d, &mut rng);
            linear_params(&mut p, "tm.rtg", 1, d, &mut rng);
        } else {
            let pd = cfg.patch_size * cfg.patch_size * crate::engine::CHANNELS;
            linear_params(&mut p, "sp.patch", pd, d, &mut rng);
            linear_params(&mut p, "sp.act", ACTION_FEATURES, d, &mut rng);
            linear_params(&mut p, "sp.rtg", 1, d, &mut rng);
            linear_params(&mut p, "sp.card", CARD_FEATURES, d, &mut rng);
            p.add_uniform("sp.pos", cfg.spatial_tokens(), d, 0.02, &mut rng);
            for n in 0..cfg.n_layers {
                if n > 0 {
                    block_params(&mut p, &format!("sp.block{n}"), d, ff, &mut rng);
                }
                linear_params(&mut p, &format!("sp.local{n}"), d, d, &mut rng);
            }
        }
        for n in 0..cfg.n_layers {
            block_params(&mut p, &format!("tm.block{n}"), d, ff, &mut rng);
        }
        p.add_filled("out.ln.g", 1, d, 1.0);
        p.add_filled("out.ln.b", 1, d, 0.0);
        linear_params(&mut p, "out.pos", d, POS_CLASSES, &mut rng);
        linear_params(&mut p, "out.select", d, SELECT_CLASSES, &mut rng);
        linear_params(&mut p, "out.delay", d, cfg.delay_classes(), &mut rng);
        Ok(Self { cfg, params: p })
    }

    /// Checks that `params` has exactly the names and shapes `cfg` produces.
    pub fn from_parts(cfg: ModelConfig, params: Params) -> Result<Self, ModelError> {
        let fresh = Self::new(cfg.clone())?;
        if fresh.params.len() != params.len() {
            return Err(ModelError::ConfigMismatch(format!(
                "expected {} tensors, found {}",
                fresh.params.len(),
                params.len()
            )));
        }
        for ((_, na, ta), (_, nb, tb)) in fresh.params.iter().zip(params.iter()) {
            if na != nb || ta.shape() != tb.shape() {
                return Err(ModelError::ConfigMismatch(format!("parameter {nb} {:?} vs expected {na} {:?}", tb.shape(), ta.shape())));
            }
        }
        Ok(Self { cfg, params })
    }

    pub fn step_inputs(&self, steps: &[WindowStep]) -> StepInputs {
        let n = steps.len();
        let mut act = Tensor::zeros(n, ACTION_FEATURES);
        let mut rtg = Tensor::zeros(n, 1);
        let mut card = Tensor::zeros(n, CARD_FEATURES);
        let mut grid = Tensor::zeros(n, GRID_LEN);
        let pc = patch_count(self.cfg.patch_size);
        let pd = self.cfg.patch_size * self.cfg.patch_size * crate::engine::CHANNELS;
        let mut patches = self.cfg.arch.has_spatial().then(|| Tensor::zeros(n * pc, pd));
        for (t, s) in steps.iter().enumerate() {
            action_features(s.prev_action, act.row_mut(t));
            rtg.data[t] = s.rtg / self.cfg.rtg_scale;
            card_features(s, card.row_mut(t));
            grid.row_mut(t).copy_from_slice(&s.grid);
            if let Some(pt) = patches.as_mut() {
                let p = patchify(&s.grid, self.cfg.patch_size).expect("validated patch size");
                pt.data[t * pc * pd..(t + 1) * pc * pd].copy_from_slice(&p.data);
            }
        }
        StepInputs { n, act, rtg, card, grid, patches }
    }

    fn lin(&self, g: &mut Graph, x: Var, prefix: &str) -> Var {
        let w = g.param_named(&format!("{prefix}.w"));
        let b = g.param_named(&format!("{prefix}.b"));
        g.linear(x, w, b)
    }

    fn block(&self, g: &mut Graph, x: Var, prefix: &str, groups: usize, mask: Option<Rc<MaskMatrix>>) -> Var {
        let p = |g: &mut Graph, s: &str| g.param_named(&format!("{prefix}.{s}"));
        let (g1, b1) = (p(g, "ln1.g"), p(g, "ln1.b"));
        let h = g.layer_norm(x, g1, b1);
        let (wq, wk, wv, wo, bo) = (p(g, "wq"), p(g, "wk"), p(g, "wv"), p(g, "wo"), p(g, "bo"));
        let q = g.matmul(h, wq);
        let k = g.matmul(h, wk);
        let v = g.matmul(h, wv);
        let a = g.attention(q, k, v, groups, self.cfg.n_heads, mask, self.cfg.mask_mode);
        let a = g.linear(a, wo, bo);
        let x = g.add(x, a);
        let (g2, b2) = (p(g, "ln2.g"), p(g, "ln2.b"));
        let h = g.layer_norm(x, g2, b2);
        let (w1, c1, w2, c2) = (p(g, "ff1.w"), p(g, "ff1.b"), p(g, "ff2.w"), p(g, "ff2.b"));
        let f = g.linear(h, w1, c1);
        let f = g.gelu(f);
        let f = g.linear(f, w2, c2);
        g.add(x, f)
    }

    fn encode(&self, g: &mut Graph, inp: &StepInputs) -> StepVars {
        let n = inp.n;
        let grid = g.constant(inp.grid.clone());
        let card_in = g.constant(inp.card.clone());
        let act_in = g.constant(inp.act.clone());
        let rtg_in = g.constant(inp.rtg.clone());
        let img = self.lin(g, grid, "tm.img");
        let card = self.lin(g, card_in, "tm.card");
        if !self.cfg.arch.has_spatial() {
            let act = self.lin(g, act_in, "tm.act");
            let rtg = self.lin(g, rtg_in, "tm.rtg");
            return StepVars { img, card, act: Some(act), rtg: Some(rtg), local: Vec::new() };
        }
        let pc = patch_count(self.cfg.patch_size);
        let patches = g.constant(inp.patches.clone().expect("spatial inputs"));
        let pe = self.lin(g, patches, "sp.patch");
        let sa = self.lin(g, act_in, "sp.act");
        let sr = self.lin(g, rtg_in, "sp.rtg");
        let sc = self.lin(g, card_in, "sp.card");
        let all = g.concat_rows(&[sa, sr, sc, pe]);
        let mut idx = Vec::with_capacity(n * (3 + pc));
        for t in 0..n {
            idx.extend([t, n + t, 2 * n + t]);
            idx.extend((0..pc).map(|i| 3 * n + t * pc + i));
        }
        let tokens = g.gather_rows(all, idx);
        let pos = g.param_named("sp.pos");
        let mut x = g.add_broadcast(tokens, pos);
        let mut local = Vec::with_capacity(self.cfg.n_layers);
        for layer in 0..self.cfg.n_layers {
            if layer > 0 {
                x = self.block(g, x, &format!("sp.block{layer}"), n, None);
            }
            let pooled = g.group_mean(x, n);
            local.push(self.lin(g, pooled, &format!("sp.local{layer}")));
        }
        StepVars { img, card, act: None, rtg: None, local }
    }

    /// Interleaves per-slot `l x d` token blocks into step-major order.
    fn interleave(g: &mut Graph, parts: &[Var], l: usize) -> Var {
        let k = parts.len();
        let all = g.concat_rows(parts);
        let idx = (0..l * k).map(|r| (r % k) * l + r / k).collect();
        g.gather_rows(all, idx)
    }

    fn slot(g: &mut Graph, x: Var, slot: usize, k: usize, l: usize) -> Var {
        g.gather_rows(x, (0..l).map(|t| t * k + slot).collect())
    }

    fn with_position(&self, g: &mut Graph, x: Var, slot: usize, l: usize) -> Var {
        let pos = g.param_named("tm.pos");
        let pos = g.gather_rows(pos, (self.cfg.l - l..self.cfg.l).collect());
        let ty = g.param_named("tm.type");
        let ty = g.gather_rows(ty, vec![slot]);
        let x = g.add(x, pos);
        g.add_broadcast(x, ty)
    }

    fn temporal(&self, g: &mut Graph, sv: &StepVars, pad: &[bool]) -> Predictions {
        let l = pad.len();
        assert!(l <= self.cfg.l, "window longer than the context length");
        let k = self.cfg.arch.tokens_per_step();
        let token_pad: Vec<bool> = pad.iter().flat_map(|&p| std::iter::repeat_n(p, k)).collect();
        let base = match self.cfg.arch {
            Arch::DT4L => MaskMatrix::causal(l * k),
            _ => local_mask(l, k),
        };
        let mask = Rc::new(base.with_padding(&token_pad));

        let (main_slot, card_slot) = match self.cfg.arch {
            Arch::StARformer3L => (0, 1),
            Arch::StARformer2L => (0, 0),
            Arch::DT4L => (2, 3),
        };
        let mut x = match self.cfg.arch {
            Arch::DT4L => {
                let parts = [sv.act.unwrap(), sv.rtg.unwrap(), sv.img, sv.card];
                let parts: Vec<Var> = parts.iter().enumerate().map(|(s, &v)| self.with_position(g, v, s, l)).collect();
                Self::interleave(g, &parts, l)
            }
            Arch::StARformer3L => {
                let img = self.with_position(g, sv.img, 0, l);
                let card = self.with_position(g, sv.card, 1, l);
                let loc = self.with_position(g, sv.local[0], 2, l);
                Self::interleave(g, &[img, card, loc], l)
            }
            Arch::StARformer2L => {
                let z = g.add(sv.img, sv.card);
                let z = self.with_position(g, z, 0, l);
                let loc = self.with_position(g, sv.local[0], 1, l);
                Self::interleave(g, &[z, loc], l)
            }
        };
        for layer in 0..self.cfg.n_layers {
            if layer > 0 && self.cfg.arch.has_spatial() {
                // replace the local slots with the next spatial summary
                let keep: Vec<Var> = (0..k - 1).map(|s| Self::slot(g, x, s, k, l)).collect();
                let loc = self.with_position(g, sv.local[layer], k - 1, l);
                let mut parts = keep;
                parts.push(loc);
                x = Self::interleave(g, &parts, l);
            }
            x = self.block(g, x, &format!("tm.block{layer}"), 1, Some(mask.clone()));
        }
        let (lg, lb) = (g.param_named("out.ln.g"), g.param_named("out.ln.b"));
        let x = g.layer_norm(x, lg, lb);
        let main = Self::slot(g, x, main_slot, k, l);
        let card = if card_slot == main_slot { main } else { Self::slot(g, x, card_slot, k, l) };
        let pos = self.lin(g, main, "out.pos");
        let select = self.lin(g, card, "out.select");
        let delay = self.lin(g, card, "out.delay");
        Predictions { pos, select, delay }
    }

    /// Logits for every step of `window` (at most `cfg.l` steps).
    pub fn forward(&self, g: &mut Graph, window: &TrajectoryWindow) -> Predictions {
        let inp = self.step_inputs(&window.steps);
        let sv = self.encode(g, &inp);
        self.temporal(g, &sv, &window.pad)
    }

    /// Position-independent encodings of single steps, for inference caching.
    pub fn encode_steps(&self, steps: &[WindowStep]) -> Vec<StepEncoding> {
        let inp = self.step_inputs(steps);
        let mut g = Graph::new(&self.params);
        let sv = self.encode(&mut g, &inp);
        let rows = |g: &Graph, v: Var, t: usize| g.value(v).row(t).to_vec();
        (0..steps.len())
            .map(|t| StepEncoding {
                img: rows(&g, sv.img, t),
                card: rows(&g, sv.card, t),
                act: sv.act.map(|v| rows(&g, v, t)).unwrap_or_default(),
                rtg: sv.rtg.map(|v| rows(&g, v, t)).unwrap_or_default(),
                local: sv.local.iter().map(|&v| rows(&g, v, t)).collect(),
            })
            .collect()
    }

    /// Logits of the last step given cached encodings (oldest first, no padding).
    pub fn predict_last(&self, enc: &[StepEncoding]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let l = enc.len();
        let d = self.cfg.d_model;
        let mut g = Graph::new(&self.params);
        let stack = |g: &mut Graph, f: &dyn Fn(&StepEncoding) -> &Vec<f64>| {
            let data: Vec<f64> = enc.iter().flat_map(|e| f(e).iter().copied()).collect();
            g.constant(Tensor::from_vec(l, d, data))
        };
        let img = stack(&mut g, &|e| &e.img);
        let card = stack(&mut g, &|e| &e.card);
        let (act, rtg) = if self.cfg.arch.has_spatial() {
            (None, None)
        } else {
            (Some(stack(&mut g, &|e| &e.act)), Some(stack(&mut g, &|e| &e.rtg)))
        };
        let local = (0..enc[0].local.len()).map(|n| stack(&mut g, &|e| &e.local[n])).collect();
        let sv = StepVars { img, card, act, rtg, local };
        let p = self.temporal(&mut g, &sv, &vec![false; l]);
        let last = |g: &Graph, v: Var| g.value(v).row(l - 1).to_vec();
        (last(&g, p.pos), last(&g, p.select), last(&g, p.delay))
    }
}
