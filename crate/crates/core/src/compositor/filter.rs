use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DrawUnit, SpritePack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMode {
    /// Opaque sprite pixels against opaque pixels already in the mask.
    #[default]
    Alpha,
    /// Whole bounding boxes.
    BBox,
}

fn footprint<'a>(u: &'a DrawUnit, pack: &'a SpritePack, mode: CoverageMode, cw: u32, ch: u32) -> impl Iterator<Item = usize> + 'a {
    let sprite = pack.sprite(u.slice_id).expect("unit slice is in the pack");
    (0..u.h).flat_map(move |sy| (0..u.w).map(move |sx| (sx, sy))).filter_map(move |(sx, sy)| {
        let (x, y) = (u.x + sx as i32, u.y + sy as i32);
        let inside = x >= 0 && y >= 0 && (x as u32) < cw && (y as u32) < ch;
        let solid = mode == CoverageMode::BBox || sprite.opaque(sx, sy);
        (inside && solid).then(|| y as usize * cw as usize + x as usize)
    })
}

/// Fraction of the unit's footprint already set in `mask`. A unit with an
/// empty footprint has coverage 0.
pub fn coverage(u: &DrawUnit, pack: &SpritePack, mask: &[bool], cw: u32, ch: u32, mode: CoverageMode) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for i in footprint(u, pack, mode, cw, ch) {
        total += 1;
        hit += mask[i] as usize;
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    /// Surviving units in sweep order: level descending, then manifest order,
    /// then insertion order.
    pub kept: Vec<DrawUnit>,
    /// Groups removed, in removal order.
    pub removed_groups: Vec<u32>,
    pub removed_units: usize,
    pub passes: usize,
}

/// Repeats top-down passes until one removes nothing. In each pass a unit
/// whose coverage by everything above it exceeds `alpha` takes its whole group
/// with it. The mask of a pass still includes units removed earlier in that
/// pass; they are dropped only from the next pass on.
pub fn filter_coverage(units: &[DrawUnit], pack: &SpritePack, cw: u32, ch: u32, alpha: f64, mode: CoverageMode) -> FilterOutcome {
    let mut live: Vec<DrawUnit> = units.to_vec();
    // within a level: manifest order, then insertion (rng) order via stability
    live.sort_by_key(|u| (std::cmp::Reverse(u.level), pack.manifest_index(u.slice_id)));
    let mut removed_groups = Vec::new();
    let mut passes = 0;
    let mut mask = vec![false; cw as usize * ch as usize];
    loop {
        passes += 1;
        mask.fill(false);
        let mut dropped: BTreeSet<u32> = BTreeSet::new();
        for u in &live {
            if !dropped.contains(&u.group) && coverage(u, pack, &mask, cw, ch, mode) > alpha {
                dropped.insert(u.group);
                removed_groups.push(u.group);
            }
            for i in footprint(u, pack, mode, cw, ch) {
                mask[i] = true;
            }
        }
        if dropped.is_empty() {
            break;
        }
        live.retain(|u| !dropped.contains(&u.group));
    }
    FilterOutcome { removed_units: units.len() - live.len(), kept: live, removed_groups, passes }
}

/// Every unit's coverage by the units before it in `kept` order.
pub fn coverage_profile(kept: &[DrawUnit], pack: &SpritePack, cw: u32, ch: u32, mode: CoverageMode) -> Vec<f64> {
    let mut mask = vec![false; cw as usize * ch as usize];
    kept.iter()
        .map(|u| {
            let c = coverage(u, pack, &mask, cw, ch, mode);
            for i in footprint(u, pack, mode, cw, ch) {
                mask[i] = true;
            }
            c
        })
        .collect()
}
