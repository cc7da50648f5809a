use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::filter::{coverage_profile, filter_coverage, FilterOutcome};
use super::render::{render, LabelBox, RenderedScene};
use super::scene::{build_scene_spec, CategoryCounts, GeneratorConfig, SceneSpec};
use super::{CompositorError, SpritePack};

#[derive(Debug, Clone)]
pub struct GeneratedScene {
    pub index: u64,
    pub spec: SceneSpec,
    pub filtered: FilterOutcome,
    pub rendered: RenderedScene,
}

/// Scene `index` draws from its own ChaCha stream of `cfg.seed`; the category
/// counts are the only state shared between scenes.
pub fn generate_scene(pack: &SpritePack, cfg: &GeneratorConfig, counts: &mut CategoryCounts, index: u64) -> Result<GeneratedScene, CompositorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let spec = build_scene_spec(pack, cfg, counts, &mut rng)?;
    let filtered = filter_coverage(&spec.units, pack, spec.canvas_w, spec.canvas_h, cfg.alpha, cfg.coverage_mode);
    let rendered = render(&filtered.kept, pack, spec.background, spec.canvas_w, spec.canvas_h, &cfg.detectable(pack));
    Ok(GeneratedScene { index, spec, filtered, rendered })
}

/// Invariant violations of one scene, empty when it is sound.
pub fn check_scene(scene: &GeneratedScene, pack: &SpritePack, cfg: &GeneratorConfig) -> Vec<String> {
    let (cw, ch) = (scene.spec.canvas_w, scene.spec.canvas_h);
    let mut out = Vec::new();
    let again = filter_coverage(&scene.filtered.kept, pack, cw, ch, cfg.alpha, cfg.coverage_mode);
    if again.kept != scene.filtered.kept || again.passes != 1 {
        out.push(format!("scene {}: filter output is not a fixpoint", scene.index));
    }
    for (u, c) in scene.filtered.kept.iter().zip(coverage_profile(&scene.filtered.kept, pack, cw, ch, cfg.coverage_mode)) {
        if c > cfg.alpha {
            out.push(format!("scene {}: slice {} kept with coverage {c:.4}", scene.index, u.slice_id));
        }
    }
    let kept_groups: BTreeSet<u32> = scene.filtered.kept.iter().map(|u| u.group).collect();
    let mut sizes: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for u in &scene.spec.units {
        sizes.entry(u.group).or_default().0 += 1;
        if !u.in_canvas(cw, ch) {
            out.push(format!("scene {}: slice {} leaves the canvas", scene.index, u.slice_id));
        }
    }
    for u in &scene.filtered.kept {
        sizes.entry(u.group).or_default().1 += 1;
    }
    for (g, (all, kept)) in sizes {
        if kept_groups.contains(&g) && kept != all {
            out.push(format!("scene {}: group {g} partially kept ({kept} of {all})", scene.index));
        }
    }
    for l in &scene.rendered.labels {
        if !l.in_unit_square() {
            out.push(format!("scene {}: label out of bounds: {l}", scene.index));
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub labels: u64,
    pub mean_w: f64,
    pub mean_h: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub scenes: u64,
    pub labels: u64,
    pub units: u64,
    pub removed_units: u64,
    pub removed_groups: u64,
    pub violations: u64,
    /// Sampled troop and spell slices per category, before filtering.
    pub generated: CategoryCounts,
    /// Labels per detectable category, after filtering.
    pub per_category: BTreeMap<u32, CategoryStats>,
}

impl DatasetReport {
    fn add(&mut self, scene: &GeneratedScene, violations: usize) {
        self.scenes += 1;
        self.units += scene.spec.units.len() as u64;
        self.removed_units += scene.filtered.removed_units as u64;
        self.removed_groups += scene.filtered.removed_groups.len() as u64;
        self.violations += violations as u64;
        for l in &scene.rendered.labels {
            self.labels += 1;
            let s = self.per_category.entry(l.category).or_default();
            s.labels += 1;
            // running means keep the report independent of the scene count
            s.mean_w += (l.w - s.mean_w) / s.labels as f64;
            s.mean_h += (l.h - s.mean_h) / s.labels as f64;
        }
    }
}

/// Writes `{i:06}.png` and `{i:06}.txt` per scene plus `manifest.json`,
/// `config.json` and `stats.json`.
pub fn generate_dataset(pack: &SpritePack, cfg: &GeneratorConfig, count: u64, out: &Path) -> Result<DatasetReport, CompositorError> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let mut counts = CategoryCounts::new();
    let mut report = DatasetReport::default();
    for i in 0..count {
        let scene = generate_scene(pack, cfg, &mut counts, i)?;
        let violations = check_scene(&scene, pack, cfg);
        for v in &violations {
            log::warn!("{v}");
        }
        scene.rendered.image.save(out.join(format!("{i:06}.png")))?;
        fs::write(out.join(format!("{i:06}.txt")), scene.rendered.label_text())?;
        report.add(&scene, violations.len());
    }
    report.generated = counts;
    fs::write(out.join("manifest.json"), pack.manifest_json())?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    fs::write(out.join("stats.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelBox>, CompositorError> {
    fs::read_to_string(path)?.lines().filter(|l| !l.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub scenes: u64,
    pub labels: u64,
    pub problems: Vec<String>,
}

/// Checks every label file of a generated directory: parseable lines, boxes
/// inside the unit square, categories known to the manifest and a matching PNG.
pub fn validate_dataset(dir: &Path) -> Result<ValidationReport, CompositorError> {
    let pack = SpritePack::from_manifest_json(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let known: BTreeSet<u32> = pack.categories().collect();
    let mut names: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    names.sort();
    let mut report = ValidationReport::default();
    for path in names {
        report.scenes += 1;
        let name = path.display().to_string();
        match read_labels(&path) {
            Ok(labels) => {
                for l in labels {
                    report.labels += 1;
                    if !l.in_unit_square() {
                        report.problems.push(format!("{name}: box out of bounds: {l}"));
                    }
                    if !known.contains(&l.category) {
                        report.problems.push(format!("{name}: unknown category {}", l.category));
                    }
                }
            }
            Err(e) => report.problems.push(format!("{name}: {e}")),
        }
        if !path.with_extension("png").exists() {
            report.problems.push(format!("{name}: missing image"));
        }
    }
    Ok(report)
}
