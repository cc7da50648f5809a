use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::assets::{AccessoryRole, CategoryKind, SpritePack, AUX_TOWER, AUX_TOWER_RUIN, MAIN_TOWER, MAIN_TOWER_RUIN};
use super::filter::CoverageMode;
use super::{CompositorError, DrawUnit};
use crate::engine::{TowerSlot, GRID_H, GRID_W};

/// Generated slice count per sampled category.
pub type CategoryCounts = BTreeMap<u32, u64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub canvas_w: u32,
    pub canvas_h: u32,
    /// Largest tolerated covered fraction of a unit's footprint.
    pub alpha: f64,
    /// Detectable categories that receive labels; empty means every detectable category of the pack.
    pub detect: Vec<u32>,
    pub min_troops: u32,
    pub max_troops: u32,
    pub max_augmentation: u32,
    pub p_destroyed: f64,
    pub p_health_bar: f64,
    pub p_elixir_badge: f64,
    pub p_clock: f64,
    /// Pixel centers of the six towers, side 0 first in slot order.
    pub tower_anchors: Vec<(i32, i32)>,
    /// Optional `18 x 32` cell weights for troop placement, indexed `x * 32 + y`.
    pub density: Option<Vec<f64>>,
    pub coverage_mode: CoverageMode,
    pub seed: u64,
}

fn default_anchors(cw: u32, ch: u32) -> Vec<(i32, i32)> {
    let (px, py) = (cw as f64 / GRID_W as f64, ch as f64 / GRID_H as f64);
    let mut out = Vec::with_capacity(6);
    for side in 0..2u8 {
        for slot in TowerSlot::ALL {
            let c = slot.own_cell().view(side);
            // image rows grow downwards while grid rows grow towards side 1
            let y = GRID_H - 1 - c.y as usize;
            out.push((((c.x as f64 + 0.5) * px) as i32, ((y as f64 + 0.5) * py) as i32));
        }
    }
    out
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            canvas_w: 288,
            canvas_h: 512,
            alpha: 0.5,
            detect: Vec::new(),
            min_troops: 4,
            max_troops: 16,
            max_augmentation: 4,
            p_destroyed: 0.2,
            p_health_bar: 0.8,
            p_elixir_badge: 0.15,
            p_clock: 0.1,
            tower_anchors: default_anchors(288, 512),
            density: None,
            coverage_mode: CoverageMode::Alpha,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), CompositorError> {
        let bad = |m: &str| Err(CompositorError::InvalidConfig(m.into()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if self.tower_anchors.len() != 6 {
            return bad("exactly six tower anchors are required");
        }
        if self.min_troops > self.max_troops {
            return bad("min_troops exceeds max_troops");
        }
        if self.canvas_w < 64 || self.canvas_h < 64 {
            return bad("canvas must be at least 64 x 64");
        }
        for p in [self.p_destroyed, self.p_health_bar, self.p_elixir_badge, self.p_clock] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if let Some(d) = &self.density {
            if d.len() != GRID_W * GRID_H || d.iter().any(|w| !(*w >= 0.0)) || d.iter().sum::<f64>() <= 0.0 {
                return bad("density needs 576 non-negative weights with a positive sum");
            }
        }
        Ok(())
    }

    pub fn detectable(&self, pack: &SpritePack) -> Vec<u32> {
        if self.detect.is_empty() {
            pack.detectable()
        } else {
            self.detect.clone()
        }
    }
}

/// Draws a category with probability proportional to `1 / (n_c - n_min + 1)`.
pub fn sample_category(counts: &CategoryCounts, rng: &mut impl Rng) -> u32 {
    assert!(!counts.is_empty(), "sample_category needs at least one category");
    let n_min = *counts.values().min().expect("nonempty");
    let weights = counts.values().map(|&n| 1.0 / (n - n_min + 1) as f64);
    let dist = WeightedIndex::new(weights).expect("weights are positive");
    *counts.keys().nth(dist.sample(rng)).expect("index in range")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub canvas_w: u32,
    pub canvas_h: u32,
    pub background: usize,
    /// Drawing units in insertion order.
    pub units: Vec<DrawUnit>,
}

struct Builder<'a> {
    pack: &'a SpritePack,
    cfg: &'a GeneratorConfig,
    units: Vec<DrawUnit>,
    next_group: u32,
}

impl Builder<'_> {
    fn slice(&self, category: u32, rng: &mut impl Rng) -> Result<usize, CompositorError> {
        let s = self.pack.slices(category);
        if s.is_empty() {
            return Err(CompositorError::MissingAsset(format!("category {category}")));
        }
        Ok(s[rng.random_range(0..s.len())])
    }

    /// Places slice `idx` with its top-left at `(x, y)`, clamped into the canvas.
    fn place(&mut self, idx: usize, x: i32, y: i32, bel: u8, group: u32) -> DrawUnit {
        let e = &self.pack.entries[idx];
        let s = &self.pack.sprites[idx];
        let x = x.clamp(0, (self.cfg.canvas_w - s.w) as i32);
        let y = y.clamp(0, (self.cfg.canvas_h - s.h) as i32);
        let u = DrawUnit { slice_id: e.slice_id, category: e.category, level: e.level, x, y, w: s.w, h: s.h, bel, group, accessory: e.accessory_of };
        self.units.push(u.clone());
        u
    }

    fn place_centered(&mut self, idx: usize, cx: i32, cy: i32, bel: u8) -> DrawUnit {
        let s = &self.pack.sprites[idx];
        let g = self.next_group;
        self.next_group += 1;
        self.place(idx, cx - s.w as i32 / 2, cy - s.h as i32 / 2, bel, g)
    }

    fn accessory(&mut self, owner: &DrawUnit, role: AccessoryRole, rng: &mut impl Rng) -> Result<(), CompositorError> {
        let idx = self.slice(role.category(), rng)?;
        let s = &self.pack.sprites[idx];
        let (w, h) = (s.w as i32, s.h as i32);
        let (x, y) = match role {
            AccessoryRole::HealthBar => (owner.x + owner.w as i32 / 2 - w / 2, owner.y - h - 1),
            AccessoryRole::ElixirBadge => (owner.x + owner.w as i32 + 1, owner.y),
            AccessoryRole::Clock => (owner.x - w - 1, owner.y),
        };
        self.place(idx, x, y, owner.bel, owner.group);
        Ok(())
    }

    fn bel_at(&self, cy: i32) -> u8 {
        // side 0 owns the lower half of the image
        if cy >= self.cfg.canvas_h as i32 / 2 {
            0
        } else {
            1
        }
    }

    fn point(&self, density: Option<&WeightedIndex<f64>>, rng: &mut impl Rng) -> (i32, i32) {
        let (cw, ch) = (self.cfg.canvas_w as f64 / GRID_W as f64, self.cfg.canvas_h as f64 / GRID_H as f64);
        let cell = match density {
            Some(d) => d.sample(rng),
            None => rng.random_range(0..GRID_W * GRID_H),
        };
        let (gx, gy) = (cell / GRID_H, cell % GRID_H);
        let row = GRID_H - 1 - gy;
        let x = (gx as f64 + rng.random::<f64>()) * cw;
        let y = (row as f64 + rng.random::<f64>()) * ch;
        (x as i32, y as i32)
    }
}

/// Background, augmentation, six towers, then troops and spells drawn by the
/// inverse-frequency sampler. `counts` is updated with every sampled category.
pub fn build_scene_spec(pack: &SpritePack, cfg: &GeneratorConfig, counts: &mut CategoryCounts, rng: &mut impl Rng) -> Result<SceneSpec, CompositorError> {
    cfg.validate()?;
    for c in pack.categories().filter(|&c| CategoryKind::of(c).is_some_and(|k| k.is_sampled())) {
        counts.entry(c).or_insert(0);
    }
    if counts.is_empty() {
        return Err(CompositorError::MissingAsset("troop or spell categories".into()));
    }
    let mut b = Builder { pack, cfg, units: Vec::new(), next_group: 0 };
    let background = rng.random_range(0..pack.background_count());
    let density = cfg.density.as_ref().map(|d| WeightedIndex::new(d.iter().copied()).expect("validated density"));

    let decor: Vec<u32> = pack
        .categories()
        .filter(|&c| matches!(CategoryKind::of(c), Some(CategoryKind::GroundDecor | CategoryKind::AirDecor)))
        .collect();
    let n_aug = if decor.is_empty() { 0 } else { rng.random_range(0..=cfg.max_augmentation) };
    for _ in 0..n_aug {
        let c = decor[rng.random_range(0..decor.len())];
        let idx = b.slice(c, rng)?;
        let (x, y) = b.point(None, rng);
        let bel = b.bel_at(y);
        b.place_centered(idx, x, y, bel);
    }

    for (i, &(ax, ay)) in cfg.tower_anchors.iter().enumerate() {
        let main = i % 3 == 0;
        let destroyed = rng.random_bool(cfg.p_destroyed);
        let category = match (main, destroyed) {
            (true, false) => MAIN_TOWER,
            (false, false) => AUX_TOWER,
            (true, true) => MAIN_TOWER_RUIN,
            (false, true) => AUX_TOWER_RUIN,
        };
        let idx = b.slice(category, rng)?;
        let tower = b.place_centered(idx, ax, ay, (i / 3) as u8);
        if !destroyed {
            b.accessory(&tower, AccessoryRole::HealthBar, rng)?;
        }
    }

    let n_troops = rng.random_range(cfg.min_troops..=cfg.max_troops);
    for _ in 0..n_troops {
        let c = sample_category(counts, rng);
        *counts.get_mut(&c).expect("sampled from counts") += 1;
        let idx = b.slice(c, rng)?;
        let (x, y) = b.point(density.as_ref(), rng);
        let bel = b.bel_at(y);
        let unit = b.place_centered(idx, x, y, bel);
        let troop = matches!(CategoryKind::of(c), Some(CategoryKind::GroundTroop | CategoryKind::AirTroop));
        if troop && rng.random_bool(cfg.p_health_bar) {
            b.accessory(&unit, AccessoryRole::HealthBar, rng)?;
        }
        if troop && rng.random_bool(cfg.p_elixir_badge) {
            b.accessory(&unit, AccessoryRole::ElixirBadge, rng)?;
        }
        if rng.random_bool(cfg.p_clock) {
            b.accessory(&unit, AccessoryRole::Clock, rng)?;
        }
    }
    Ok(SceneSpec { canvas_w: cfg.canvas_w, canvas_h: cfg.canvas_h, background, units: b.units })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inverse_frequency_weights() {
        let counts: CategoryCounts = [(1, 0), (2, 9)].into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 200_000;
        let a = (0..n).filter(|_| sample_category(&counts, &mut rng) == 1).count();
        let p = a as f64 / n as f64;
        // P(A) = 1 / (1 + 0.1); binomial sd is about 0.0007
        assert!((p - 10.0 / 11.0).abs() < 0.004, "{p}");
        let single: CategoryCounts = [(7, 3)].into_iter().collect();
        assert_eq!(sample_category(&single, &mut rng), 7);
    }

    #[test]
    fn equal_counts_are_uniform() {
        let counts: CategoryCounts = (1..=4).map(|c| (c, 5)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hits = [0usize; 4];
        for _ in 0..40_000 {
            hits[sample_category(&counts, &mut rng) as usize - 1] += 1;
        }
        for h in hits {
            assert!((h as f64 / 10_000.0 - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn towers_only_scene() {
        let pack = SpritePack::builtin();
        let cfg = GeneratorConfig { min_troops: 0, max_troops: 0, max_augmentation: 0, ..GeneratorConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = build_scene_spec(&pack, &cfg, &mut CategoryCounts::new(), &mut rng).unwrap();
        let towers: Vec<_> = s.units.iter().filter(|u| CategoryKind::of(u.category) == Some(CategoryKind::Tower)).collect();
        assert_eq!(towers.len(), 6);
        assert!(s.units.iter().all(|u| u.accessory.is_some() || CategoryKind::of(u.category) == Some(CategoryKind::Tower)));
        for t in towers {
            let bars = s.units.iter().filter(|u| u.group == t.group && u.accessory.is_some()).count();
            let ruin = t.category == MAIN_TOWER_RUIN || t.category == AUX_TOWER_RUIN;
            assert_eq!(bars, if ruin { 0 } else { 1 });
        }
    }

    #[test]
    fn ruins_carry_no_health_bar() {
        let pack = SpritePack::builtin();
        let cfg = GeneratorConfig { min_troops: 0, max_troops: 0, max_augmentation: 0, p_destroyed: 1.0, ..GeneratorConfig::default() };
        let s = build_scene_spec(&pack, &cfg, &mut CategoryCounts::new(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(s.units.len(), 6);
        assert!(s.units.iter().all(|u| u.accessory.is_none()));
    }

    #[test]
    fn online_counts_equalize_troop_frequencies() {
        let pack = SpritePack::builtin();
        let mut counts = CategoryCounts::new();
        let cfg = GeneratorConfig { min_troops: 10, max_troops: 10, ..GeneratorConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            build_scene_spec(&pack, &cfg, &mut counts, &mut rng).unwrap();
        }
        let total: u64 = counts.values().sum();
        assert_eq!(total, 10_000);
        let mean = total as f64 / counts.len() as f64;
        for (&c, &n) in &counts {
            assert!((n as f64 / mean - 1.0).abs() < 0.02, "category {c}: {n} vs {mean}");
        }
    }

    #[test]
    fn missing_tower_slices_fail() {
        let pack = SpritePack::builtin();
        let entries = pack.entries.iter().filter(|e| e.category != MAIN_TOWER).cloned().collect();
        let pack = SpritePack::from_entries(entries).unwrap();
        let r = build_scene_spec(&pack, &GeneratorConfig { p_destroyed: 0.0, ..GeneratorConfig::default() }, &mut CategoryCounts::new(), &mut ChaCha8Rng::seed_from_u64(5));
        assert!(matches!(r, Err(CompositorError::MissingAsset(_))));
    }
}
