use std::fmt;
use std::str::FromStr;

use image::{Rgb, RgbImage};

use super::{CompositorError, DrawUnit, SpritePack};

/// One normalized label: center and size as fractions of the canvas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelBox {
    pub category: u32,
    pub bel: u8,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl LabelBox {
    pub fn of(u: &DrawUnit, cw: u32, ch: u32) -> Self {
        let (cx, cy) = u.center();
        Self { category: u.category, bel: u.bel, cx: cx / cw as f64, cy: cy / ch as f64, w: u.w as f64 / cw as f64, h: u.h as f64 / ch as f64 }
    }

    /// Allows the 1e-6 slack that six-decimal label text can introduce.
    pub fn in_unit_square(&self) -> bool {
        let lo = |c: f64, s: f64| c - s / 2.0 >= -1e-6 && c + s / 2.0 <= 1.0 + 1e-6;
        lo(self.cx, self.w) && lo(self.cy, self.h) && self.w > 0.0 && self.h > 0.0
    }
}

/// `c bel cx cy w h` with six decimals so label files are byte-stable.
impl fmt::Display for LabelBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {:.6} {:.6} {:.6} {:.6}", self.category, self.bel, self.cx, self.cy, self.w, self.h)
    }
}

impl FromStr for LabelBox {
    type Err = CompositorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CompositorError::InvalidManifest(format!("malformed label line {s:?}"));
        let f: Vec<&str> = s.split_whitespace().collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        Ok(Self {
            category: f[0].parse().map_err(|_| bad())?,
            bel: f[1].parse().map_err(|_| bad())?,
            cx: num(2)?,
            cy: num(3)?,
            w: num(4)?,
            h: num(5)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub image: RgbImage,
    pub labels: Vec<LabelBox>,
}

impl RenderedScene {
    pub fn label_text(&self) -> String {
        self.labels.iter().map(|l| format!("{l}\n")).collect()
    }
}

/// Composites `kept` (filter order, topmost first) over a flat background.
/// Units are drawn in reverse of that order so that whatever the filter
/// treated as covering another unit is also painted over it.
pub fn render(kept: &[DrawUnit], pack: &SpritePack, background: usize, cw: u32, ch: u32, detect: &[u32]) -> RenderedScene {
    let mut image = RgbImage::from_pixel(cw, ch, Rgb(pack.background_color(background)));
    let mut labels = Vec::new();
    for u in kept.iter().rev() {
        let sprite = pack.sprite(u.slice_id).expect("unit slice is in the pack");
        for sy in 0..u.h.min(sprite.h) {
            for sx in 0..u.w.min(sprite.w) {
                let (x, y) = (u.x + sx as i32, u.y + sy as i32);
                if x < 0 || y < 0 || x as u32 >= cw || y as u32 >= ch || !sprite.opaque(sx, sy) {
                    continue;
                }
                let [r, g, b, _] = sprite.pixel(sx, sy);
                image.put_pixel(x as u32, y as u32, Rgb([r, g, b]));
            }
        }
        if detect.contains(&u.category) {
            labels.push(LabelBox::of(u, cw, ch));
        }
    }
    RenderedScene { image, labels }
}
