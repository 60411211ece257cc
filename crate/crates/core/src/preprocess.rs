//! Background elimination and candidate extraction.
//!
//! The fast detection path converts the scene to gray, keeps pixels darker
//! than a threshold, groups them into connected components, drops components
//! below a minimum size and centers one classifier-sized patch on each
//! survivor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{BinaryMask, GrayRaster, PixelRect, RgbImage, Scene};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("invalid preprocess config: {0}")]
    InvalidConfig(String),
    #[error("component set is {got_w}x{got_h} but scene is {want_w}x{want_h}")]
    DimensionMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(format!("connectivity must be 4 or 8, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

/// How `min_area` is compared against a component's pixel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaRule {
    /// Keep `area >= min_area`.
    #[default]
    AtLeast,
    /// Keep `area > min_area`.
    Greater,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Pixels strictly darker than this gray level are foreground.
    pub gray_threshold: u8,
    pub min_area: usize,
    pub area_rule: AreaRule,
    /// Optional perimeter filter (pixels), off by default.
    pub min_perimeter: Option<usize>,
    pub connectivity: Connectivity,
    pub patch_size: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            gray_threshold: 100,
            min_area: 180,
            area_rule: AreaRule::AtLeast,
            min_perimeter: None,
            connectivity: Connectivity::Eight,
            patch_size: 80,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.min_area < 1 {
            return Err(PreprocessError::InvalidConfig(
                "min_area must be >= 1".into(),
            ));
        }
        if self.patch_size < 1 {
            return Err(PreprocessError::InvalidConfig(
                "patch_size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// BT.601 luma, `round(0.299 R + 0.587 G + 0.114 B)`.
#[inline]
pub fn luma(rgb: [u8; 3]) -> u8 {
    let v = 0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64;
    v.round().clamp(0.0, 255.0) as u8
}

pub fn image_to_gray(img: &RgbImage) -> GrayRaster {
    let values = img
        .data()
        .chunks_exact(3)
        .map(|p| luma([p[0], p[1], p[2]]))
        .collect();
    GrayRaster::new(img.width(), img.height(), values)
}

pub fn to_gray(scene: &Scene) -> GrayRaster {
    image_to_gray(&scene.image)
}

/// Foreground iff `gray < gray_threshold`.
pub fn threshold_mask(gray: &GrayRaster, cfg: &PreprocessConfig) -> BinaryMask {
    let t = cfg.gray_threshold;
    BinaryMask::new(
        gray.width,
        gray.height,
        gray.values.iter().map(|&g| g < t).collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Nonzero label, as stored in [`ComponentSet::labels`].
    pub id: u32,
    pub area: usize,
    /// Foreground pixels with a 4-neighbor that is background or off-image.
    pub perimeter: usize,
    pub bbox: PixelRect,
    /// Mean of pixel-center coordinates, `(x, y)`.
    pub centroid: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet {
    pub width: usize,
    pub height: usize,
    /// Per-pixel component id, 0 = background.
    pub labels: Vec<u32>,
    /// Ordered by id.
    pub components: Vec<Component>,
}

impl ComponentSet {
    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    pub fn get(&self, id: u32) -> Option<&Component> {
        self.components
            .binary_search_by_key(&id, |c| c.id)
            .ok()
            .map(|i| &self.components[i])
    }

    /// Linear indices of the pixels carrying label `id`.
    pub fn pixels_of(&self, id: u32) -> Vec<u32> {
        let Some(c) = self.get(id) else {
            return Vec::new();
        };
        let mut out = Vec::with_capacity(c.area);
        for y in c.bbox.y..c.bbox.bottom() {
            for x in c.bbox.x..c.bbox.right() {
                let i = y * self.width + x;
                if self.labels[i] == id {
                    out.push(i as u32);
                }
            }
        }
        out
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let ra = find(parent, a);
    let rb = find(parent, b);
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Two-pass union-find labeling. Component ids follow the raster-scan order
/// of each component's first pixel, starting at 1.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentSet {
    let (w, h) = (mask.width, mask.height);
    let mut provisional = vec![0u32; w * h];
    // parent[0] is a dummy for background
    let mut parent: Vec<u32> = vec![0];

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask.bits[i] {
                continue;
            }
            let mut neighbors = [0u32; 4];
            let mut n = 0;
            let mut push = |l: u32| {
                if l != 0 {
                    neighbors[n] = l;
                    n += 1;
                }
            };
            if x > 0 {
                push(provisional[i - 1]);
            }
            if y > 0 {
                push(provisional[i - w]);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        push(provisional[i - w - 1]);
                    }
                    if x + 1 < w {
                        push(provisional[i - w + 1]);
                    }
                }
            }
            if n == 0 {
                let l = parent.len() as u32;
                parent.push(l);
                provisional[i] = l;
            } else {
                let first = neighbors[0];
                provisional[i] = first;
                for &other in &neighbors[1..n] {
                    union(&mut parent, first, other);
                }
            }
        }
    }

    let mut final_id = vec![0u32; parent.len()];
    let mut next = 1u32;
    let mut labels = vec![0u32; w * h];
    for i in 0..w * h {
        let p = provisional[i];
        if p == 0 {
            continue;
        }
        let root = find(&mut parent, p) as usize;
        if final_id[root] == 0 {
            final_id[root] = next;
            next += 1;
        }
        labels[i] = final_id[root];
    }

    let components = component_stats(w, h, &labels, (next - 1) as usize);
    ComponentSet {
        width: w,
        height: h,
        labels,
        components,
    }
}

fn component_stats(w: usize, h: usize, labels: &[u32], count: usize) -> Vec<Component> {
    struct Acc {
        area: usize,
        perimeter: usize,
        sx: f64,
        sy: f64,
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
    }
    let mut acc: Vec<Acc> = (0..count)
        .map(|_| Acc {
            area: 0,
            perimeter: 0,
            sx: 0.0,
            sy: 0.0,
            x0: usize::MAX,
            y0: usize::MAX,
            x1: 0,
            y1: 0,
        })
        .collect();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == 0 {
                continue;
            }
            let a = &mut acc[(l - 1) as usize];
            a.area += 1;
            a.sx += x as f64 + 0.5;
            a.sy += y as f64 + 0.5;
            a.x0 = a.x0.min(x);
            a.y0 = a.y0.min(y);
            a.x1 = a.x1.max(x);
            a.y1 = a.y1.max(y);
            let edge = x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || labels[y * w + x - 1] == 0
                || labels[y * w + x + 1] == 0
                || labels[(y - 1) * w + x] == 0
                || labels[(y + 1) * w + x] == 0;
            if edge {
                a.perimeter += 1;
            }
        }
    }
    acc.into_iter()
        .enumerate()
        .map(|(i, a)| Component {
            id: i as u32 + 1,
            area: a.area,
            perimeter: a.perimeter,
            bbox: PixelRect::new(a.x0, a.y0, a.x1 - a.x0 + 1, a.y1 - a.y0 + 1),
            centroid: (a.sx / a.area as f64, a.sy / a.area as f64),
        })
        .collect()
}

/// Keeps components passing the area rule (and the perimeter filter, when set).
/// Removed components become background; surviving ids are unchanged.
pub fn filter_components(cs: &ComponentSet, cfg: &PreprocessConfig) -> ComponentSet {
    let keep = |c: &Component| {
        let area_ok = match cfg.area_rule {
            AreaRule::AtLeast => c.area >= cfg.min_area,
            AreaRule::Greater => c.area > cfg.min_area,
        };
        area_ok && cfg.min_perimeter.is_none_or(|p| c.perimeter >= p)
    };
    let components: Vec<Component> = cs.components.iter().filter(|c| keep(c)).cloned().collect();
    let mut alive = vec![
        false;
        cs.components
            .iter()
            .map(|c| c.id as usize + 1)
            .max()
            .unwrap_or(1)
    ];
    for c in &components {
        alive[c.id as usize] = true;
    }
    let labels = cs
        .labels
        .iter()
        .map(|&l| if l != 0 && alive[l as usize] { l } else { 0 })
        .collect();
    ComponentSet {
        width: cs.width,
        height: cs.height,
        labels,
        components,
    }
}

/// Area-only filter with the default `>=` rule.
pub fn filter_by_area(cs: &ComponentSet, min_area: usize) -> ComponentSet {
    filter_components(
        cs,
        &PreprocessConfig {
            min_area,
            ..PreprocessConfig::default()
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePatch {
    pub rect: PixelRect,
    pub component_id: u32,
    pub centroid: (f64, f64),
}

/// Start of a `size`-long window centered on `center`, clamped into `[0, dim)`.
fn centered_span(center: f64, size: usize, dim: usize) -> (usize, usize) {
    if size >= dim {
        return (0, dim);
    }
    let start = (center - size as f64 / 2.0).round().max(0.0) as usize;
    (start.min(dim - size), size)
}

pub fn extract_candidates(
    width: usize,
    height: usize,
    cs: &ComponentSet,
    cfg: &PreprocessConfig,
) -> Result<Vec<CandidatePatch>, PreprocessError> {
    if cs.width != width || cs.height != height {
        return Err(PreprocessError::DimensionMismatch {
            got_w: cs.width,
            got_h: cs.height,
            want_w: width,
            want_h: height,
        });
    }
    Ok(cs
        .components
        .iter()
        .map(|c| {
            let (x, w) = centered_span(c.centroid.0, cfg.patch_size, width);
            let (y, h) = centered_span(c.centroid.1, cfg.patch_size, height);
            CandidatePatch {
                rect: PixelRect::new(x, y, w, h),
                component_id: c.id,
                centroid: c.centroid,
            }
        })
        .collect())
}

/// Intermediate products of the whole pre-processing chain.
#[derive(Debug, Clone)]
pub struct PreprocessOutput {
    pub gray: GrayRaster,
    pub mask: BinaryMask,
    pub all_components: usize,
    pub components: ComponentSet,
    pub candidates: Vec<CandidatePatch>,
}

pub fn run(scene: &Scene, cfg: &PreprocessConfig) -> Result<PreprocessOutput, PreprocessError> {
    cfg.validate()?;
    let gray = to_gray(scene);
    let mask = threshold_mask(&gray, cfg);
    let all = connected_components(&mask, cfg.connectivity);
    let components = filter_components(&all, cfg);
    let candidates = extract_candidates(scene.width(), scene.height(), &components, cfg)?;
    Ok(PreprocessOutput {
        gray,
        mask,
        all_components: all.components.len(),
        components,
        candidates,
    })
}
