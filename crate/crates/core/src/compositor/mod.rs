//! Labeled arena scenes built from layered sprite slices.
//!
//! A scene is a background plus an ordered list of [`DrawUnit`]s. Units are
//! filtered by occlusion ([`filter_coverage`]), composited from the lowest
//! layer level up ([`render`]) and emitted with one normalized box per
//! detectable survivor.

pub mod assets;
mod dataset;
mod filter;
mod render;
mod scene;

pub use assets::{AccessoryRole, CategoryKind, ManifestEntry, Sprite, SpritePack};
pub use dataset::{check_scene, generate_dataset, generate_scene, read_labels, validate_dataset, CategoryStats, DatasetReport, GeneratedScene, ValidationReport};
pub use filter::{coverage, coverage_profile, filter_coverage, CoverageMode, FilterOutcome};
pub use render::{render, LabelBox, RenderedScene};
pub use scene::{build_scene_spec, sample_category, CategoryCounts, GeneratorConfig, SceneSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CompositorError {
    #[error("sprite pack has no slice for {0}")]
    MissingAsset(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One placed slice. `x, y` is the sprite's top-left pixel on the canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawUnit {
    pub slice_id: u32,
    pub category: u32,
    pub level: u8,
    pub x: i32,
    pub y: i32,
    pub w: u32,
    pub h: u32,
    pub bel: u8,
    /// Units sharing a group (an owner and its accessories) are removed together.
    pub group: u32,
    pub accessory: Option<AccessoryRole>,
}

impl DrawUnit {
    pub fn center(&self) -> (f64, f64) {
        (self.x as f64 + self.w as f64 / 2.0, self.y as f64 + self.h as f64 / 2.0)
    }

    pub fn in_canvas(&self, cw: u32, ch: u32) -> bool {
        self.x >= 0 && self.y >= 0 && self.x as i64 + self.w as i64 <= cw as i64 && self.y as i64 + self.h as i64 <= ch as i64
    }
}
