use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::CompositorError;

/// Category code ranges of the bundled pack. Codes `1..=150` are detectable
/// classes; codes above 150 are decoration only.
pub const GROUND_TROOPS: std::ops::RangeInclusive<u32> = 1..=20;
pub const AIR_TROOPS: std::ops::RangeInclusive<u32> = 21..=32;
pub const MAIN_TOWER: u32 = 33;
pub const AUX_TOWER: u32 = 34;
pub const MAIN_TOWER_RUIN: u32 = 35;
pub const AUX_TOWER_RUIN: u32 = 36;
pub const GROUND_SPELLS: std::ops::RangeInclusive<u32> = 37..=40;
pub const AIR_SPELLS: std::ops::RangeInclusive<u32> = 41..=42;
pub const HEALTH_BAR: u32 = 43;
pub const ELIXIR_BADGE: u32 = 44;
pub const CLOCK: u32 = 45;
pub const GROUND_DECOR: std::ops::RangeInclusive<u32> = 151..=153;
pub const AIR_DECOR: std::ops::RangeInclusive<u32> = 154..=155;
pub const MAX_DETECTABLE: u32 = 150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessoryRole {
    HealthBar,
    ElixirBadge,
    Clock,
}

impl AccessoryRole {
    pub fn category(self) -> u32 {
        match self {
            AccessoryRole::HealthBar => HEALTH_BAR,
            AccessoryRole::ElixirBadge => ELIXIR_BADGE,
            AccessoryRole::Clock => CLOCK,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CategoryKind {
    GroundSpell,
    GroundDecor,
    GroundTroop,
    Tower,
    AirTroop,
    AirSpell,
    DetectionElement,
    AirDecor,
}

impl CategoryKind {
    pub fn of(category: u32) -> Option<Self> {
        use CategoryKind::*;
        Some(match category {
            c if GROUND_TROOPS.contains(&c) => GroundTroop,
            c if AIR_TROOPS.contains(&c) => AirTroop,
            MAIN_TOWER..=AUX_TOWER_RUIN => Tower,
            c if GROUND_SPELLS.contains(&c) => GroundSpell,
            c if AIR_SPELLS.contains(&c) => AirSpell,
            HEALTH_BAR..=CLOCK => DetectionElement,
            c if GROUND_DECOR.contains(&c) => GroundDecor,
            c if AIR_DECOR.contains(&c) => AirDecor,
            _ => return None,
        })
    }

    /// Layer level; higher levels occlude lower ones.
    pub fn level(self) -> u8 {
        use CategoryKind::*;
        match self {
            GroundSpell | GroundDecor => 0,
            GroundTroop | Tower => 1,
            AirTroop | AirSpell => 2,
            DetectionElement | AirDecor => 3,
        }
    }

    /// Troops and spells are drawn by the inverse-frequency sampler.
    pub fn is_sampled(self) -> bool {
        matches!(self, CategoryKind::GroundTroop | CategoryKind::AirTroop | CategoryKind::GroundSpell | CategoryKind::AirSpell)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub slice_id: u32,
    pub category: u32,
    pub level: u8,
    #[serde(default)]
    pub accessory_of: Option<AccessoryRole>,
}

/// RGBA raster with a binary alpha channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sprite {
    pub w: u32,
    pub h: u32,
    pub rgba: Vec<u8>,
}

impl Sprite {
    pub fn opaque(&self, x: u32, y: u32) -> bool {
        self.rgba[((y * self.w + x) * 4 + 3) as usize] != 0
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = ((y * self.w + x) * 4) as usize;
        [self.rgba[i], self.rgba[i + 1], self.rgba[i + 2], self.rgba[i + 3]]
    }

    pub fn area(&self) -> usize {
        self.rgba.chunks(4).filter(|p| p[3] != 0).count()
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sprite_size(kind: CategoryKind, category: u32, h: u64) -> (u32, u32) {
    let v = (h % 5) as u32;
    match kind {
        CategoryKind::GroundTroop => (16 + 2 * v, 16 + v),
        CategoryKind::AirTroop => (18 + 2 * v, 16 + v),
        CategoryKind::Tower if category == MAIN_TOWER => (44, 48),
        CategoryKind::Tower if category == AUX_TOWER => (32, 36),
        CategoryKind::Tower if category == MAIN_TOWER_RUIN => (44, 24),
        CategoryKind::Tower => (32, 18),
        CategoryKind::GroundSpell => (36 + 2 * v, 36 + 2 * v),
        CategoryKind::AirSpell => (28 + 2 * v, 28 + 2 * v),
        CategoryKind::DetectionElement if category == HEALTH_BAR => (24, 4),
        CategoryKind::DetectionElement => (8, 8),
        CategoryKind::GroundDecor => (8 + v, 8 + v),
        CategoryKind::AirDecor => (10 + v, 8),
    }
}

/// Deterministic procedural raster for one slice.
fn draw_sprite(e: &ManifestEntry) -> Sprite {
    let kind = CategoryKind::of(e.category).expect("validated category");
    let h = mix(e.slice_id as u64 ^ (e.category as u64) << 32);
    let (w, ht) = sprite_size(kind, e.category, h);
    let color = [(h >> 8) as u8 | 0x20, (h >> 16) as u8 | 0x20, (h >> 24) as u8 | 0x20];
    let shape = (h >> 40) % 3;
    let mut rgba = vec![0u8; (w * ht * 4) as usize];
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (ht as f64 - 1.0) / 2.0);
    for y in 0..ht {
        for x in 0..w {
            let dx = (x as f64 - cx) / (w as f64 / 2.0);
            let dy = (y as f64 - cy) / (ht as f64 / 2.0);
            let inside = match kind {
                CategoryKind::DetectionElement | CategoryKind::Tower => true,
                _ => match shape {
                    0 => dx * dx + dy * dy <= 1.0,
                    1 => dx.abs() + dy.abs() <= 1.0,
                    _ => dx.abs().max(dy.abs()) <= 0.9,
                },
            };
            if inside {
                let shade = if (x + y) % 5 == 0 { 40 } else { 0 };
                let i = ((y * w + x) * 4) as usize;
                rgba[i] = color[0].saturating_sub(shade);
                rgba[i + 1] = color[1].saturating_sub(shade);
                rgba[i + 2] = color[2].saturating_sub(shade);
                rgba[i + 3] = 255;
            }
        }
    }
    Sprite { w, h: ht, rgba }
}

/// Manifest plus rasters, indexed by category.
#[derive(Debug, Clone)]
pub struct SpritePack {
    pub entries: Vec<ManifestEntry>,
    pub sprites: Vec<Sprite>,
    by_category: BTreeMap<u32, Vec<usize>>,
    by_id: HashMap<u32, usize>,
    backgrounds: Vec<[u8; 3]>,
}

impl SpritePack {
    /// Bundled pack: three slices per troop and spell category, two per tower
    /// and decoration category, one per accessory role.
    pub fn builtin() -> Self {
        let mut entries = Vec::new();
        let mut push = |category: u32, n: u32| {
            let kind = CategoryKind::of(category).expect("builtin categories are known");
            let accessory_of = match category {
                HEALTH_BAR => Some(AccessoryRole::HealthBar),
                ELIXIR_BADGE => Some(AccessoryRole::ElixirBadge),
                CLOCK => Some(AccessoryRole::Clock),
                _ => None,
            };
            for _ in 0..n {
                entries.push(ManifestEntry { slice_id: entries.len() as u32, category, level: kind.level(), accessory_of });
            }
        };
        for c in GROUND_TROOPS.chain(AIR_TROOPS).chain(GROUND_SPELLS).chain(AIR_SPELLS) {
            push(c, 3);
        }
        for c in MAIN_TOWER..=AUX_TOWER_RUIN {
            push(c, 2);
        }
        for c in HEALTH_BAR..=CLOCK {
            push(c, 1);
        }
        for c in GROUND_DECOR.chain(AIR_DECOR) {
            push(c, 2);
        }
        Self::from_entries(entries).expect("builtin manifest is valid")
    }

    pub fn from_entries(entries: Vec<ManifestEntry>) -> Result<Self, CompositorError> {
        let mut by_category: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        let mut by_id = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            let kind = CategoryKind::of(e.category).ok_or_else(|| CompositorError::InvalidManifest(format!("slice {} has unknown category {}", e.slice_id, e.category)))?;
            if kind.level() != e.level {
                return Err(CompositorError::InvalidManifest(format!("slice {} has level {} but its category sits on level {}", e.slice_id, e.level, kind.level())));
            }
            if e.accessory_of.map(|r| r.category()).is_some_and(|c| c != e.category) {
                return Err(CompositorError::InvalidManifest(format!("slice {} accessory role does not match its category", e.slice_id)));
            }
            if by_id.insert(e.slice_id, i).is_some() {
                return Err(CompositorError::InvalidManifest(format!("duplicate slice id {}", e.slice_id)));
            }
            by_category.entry(e.category).or_default().push(i);
        }
        let sprites = entries.iter().map(draw_sprite).collect();
        let backgrounds = vec![[58, 120, 64], [70, 128, 60], [52, 110, 74]];
        Ok(Self { entries, sprites, by_category, by_id, backgrounds })
    }

    pub fn from_manifest_json(text: &str) -> Result<Self, CompositorError> {
        Self::from_entries(serde_json::from_str(text)?)
    }

    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("manifest serializes")
    }

    /// Indices of the slices of `category`.
    pub fn slices(&self, category: u32) -> &[usize] {
        self.by_category.get(&category).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Position of a slice in the manifest; unknown slices sort last.
    pub fn manifest_index(&self, slice_id: u32) -> usize {
        self.by_id.get(&slice_id).copied().unwrap_or(usize::MAX)
    }

    pub fn sprite(&self, slice_id: u32) -> Option<&Sprite> {
        self.by_id.get(&slice_id).map(|&i| &self.sprites[i])
    }

    pub fn categories(&self) -> impl Iterator<Item = u32> + '_ {
        self.by_category.keys().copied()
    }

    pub fn background_count(&self) -> usize {
        self.backgrounds.len()
    }

    pub fn background_color(&self, i: usize) -> [u8; 3] {
        self.backgrounds[i % self.backgrounds.len()]
    }

    /// Detectable categories present in the pack.
    pub fn detectable(&self) -> Vec<u32> {
        self.categories().filter(|&c| c <= MAX_DETECTABLE).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_levels_follow_the_layer_table() {
        let p = SpritePack::builtin();
        for e in &p.entries {
            assert_eq!(e.level, CategoryKind::of(e.category).unwrap().level());
        }
        assert_eq!(CategoryKind::of(1).unwrap().level(), 1);
        assert_eq!(CategoryKind::of(25).unwrap().level(), 2);
        assert_eq!(CategoryKind::of(37).unwrap().level(), 0);
        assert_eq!(CategoryKind::of(HEALTH_BAR).unwrap().level(), 3);
        assert_eq!(CategoryKind::of(154).unwrap().level(), 3);
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let p = SpritePack::builtin();
        let q = SpritePack::from_manifest_json(&p.manifest_json()).unwrap();
        assert_eq!(p.entries, q.entries);
        assert_eq!(p.sprites, q.sprites);
    }

    #[test]
    fn bad_manifests_are_rejected() {
        let wrong_level = vec![ManifestEntry { slice_id: 0, category: 1, level: 3, accessory_of: None }];
        assert!(matches!(SpritePack::from_entries(wrong_level), Err(CompositorError::InvalidManifest(_))));
        let unknown = vec![ManifestEntry { slice_id: 0, category: 99, level: 1, accessory_of: None }];
        assert!(SpritePack::from_entries(unknown).is_err());
    }

    #[test]
    fn sprites_have_binary_alpha() {
        let p = SpritePack::builtin();
        for s in &p.sprites {
            assert!(s.rgba.chunks(4).all(|px| px[3] == 0 || px[3] == 255));
            assert!(s.area() > 0);
        }
    }
}
