//! Seeded synthetic scenes: dark irregular blobs on a light, slowly varying
//! background, with exact ground truth and a matching patch dataset.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{LabeledPatch, PatchDataset, Split};
use crate::raster::{
    ClassLabel, GeoTransform, GroundTruthPolygon, GroundTruthSet, PixelRect, RgbImage, Scene,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("could not place {what} after {attempts} attempts; lower n_blobs or min_separation")]
    Unsatisfiable { what: String, attempts: usize },
}

pub const MAX_ATTEMPTS: usize = 10_000;

/// Sum of the harmonic amplitudes; bounds the radial perturbation.
const MAX_IRREGULARITY: f64 = 0.08;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub scene_size: usize,
    pub n_blobs: usize,
    pub blob_radius_range: (f64, f64),
    /// Gray level of blob interiors.
    pub blob_darkness_range: (f64, f64),
    pub background_level_range: (f64, f64),
    pub noise_sigma: f64,
    /// Minimum gap between blob outlines, in pixels. The default keeps
    /// neighbouring blobs from fusing in sliding-window heatmaps at small
    /// window sizes, and still packs 20 blobs into 512².
    pub min_separation: f64,
    pub patch_size: usize,
    pub pixel_size: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            scene_size: 512,
            n_blobs: 20,
            blob_radius_range: (10.0, 30.0),
            blob_darkness_range: (35.0, 65.0),
            background_level_range: (140.0, 200.0),
            noise_sigma: 5.0,
            min_separation: 44.0,
            patch_size: 80,
            pixel_size: 0.5,
            rng_seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        let ordered = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if self.patch_size == 0 || self.scene_size < self.patch_size {
            return bad(format!(
                "scene_size {} must be at least patch_size {}",
                self.scene_size, self.patch_size
            ));
        }
        if !ordered(self.blob_radius_range) || self.blob_radius_range.0 < 2.0 {
            return bad(format!(
                "blob_radius_range {:?} must be ordered with minimum >= 2",
                self.blob_radius_range
            ));
        }
        for (name, r) in [
            ("blob_darkness_range", self.blob_darkness_range),
            ("background_level_range", self.background_level_range),
        ] {
            if !ordered(r) || r.0 < 0.0 || r.1 > 255.0 {
                return bad(format!(
                    "{name} {r:?} must be an ordered range inside [0, 255]"
                ));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        if !(self.min_separation >= 0.0 && self.pixel_size > 0.0) {
            return bad("min_separation must be >= 0 and pixel_size > 0".into());
        }
        if self.blob_darkness_range.1 >= self.background_level_range.0 - 3.0 * self.noise_sigma {
            return bad(format!(
                "blob darkness max {} must lie below background min {} minus 3 sigma ({})",
                self.blob_darkness_range.1,
                self.background_level_range.0,
                3.0 * self.noise_sigma
            ));
        }
        Ok(())
    }

    /// Whether a strict gray threshold cleanly splits blobs from background
    /// given the 3-sigma noise clamp. Colour tints shift luma by at most 2.
    pub fn separated_by(&self, gray_threshold: u8) -> bool {
        let t = gray_threshold as f64;
        let margin = 3.0 * self.noise_sigma + 2.5;
        self.blob_darkness_range.1 + margin < t && self.background_level_range.0 - margin >= t
    }
}

/// One planted blob in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Blob {
    pub center: (f64, f64),
    pub semi_major: f64,
    pub semi_minor: f64,
    pub rotation: f64,
    /// `(order, amplitude, phase)` of each radial harmonic.
    pub harmonics: Vec<(u32, f64, f64)>,
    pub darkness: f64,
}

impl Blob {
    fn rho(&self, phi: f64) -> f64 {
        1.0 + self
            .harmonics
            .iter()
            .map(|&(k, a, ph)| a * (k as f64 * phi + ph).cos())
            .sum::<f64>()
    }

    /// Farthest reach of the outline from the center.
    pub fn extent(&self) -> f64 {
        self.semi_major * (1.0 + self.harmonics.iter().map(|h| h.1.abs()).sum::<f64>())
    }

    pub fn ellipse_area(&self) -> f64 {
        PI * self.semi_major * self.semi_minor
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = self.rotation.sin_cos();
        let (u, v) = (
            (dx * c + dy * s) / self.semi_major,
            (-dx * s + dy * c) / self.semi_minor,
        );
        let r = (u * u + v * v).sqrt();
        r <= self.rho(v.atan2(u))
    }

    /// Outline sampled at `n` angles, in pixel coordinates.
    pub fn outline(&self, n: usize) -> Vec<(f64, f64)> {
        let (s, c) = self.rotation.sin_cos();
        (0..n)
            .map(|i| {
                let phi = 2.0 * PI * i as f64 / n as f64;
                let rho = self.rho(phi);
                let (u, v) = (
                    self.semi_major * rho * phi.cos(),
                    self.semi_minor * rho * phi.sin(),
                );
                (self.center.0 + u * c - v * s, self.center.1 + u * s + v * c)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub scene: Scene,
    pub ground_truth: GroundTruthSet,
    /// Training sites for the segment classifier: the blob outlines plus
    /// blob-free grid cells of a quarter patch. Unlike the buffered points
    /// these cover enough soil to label whole background segments.
    pub training_sites: GroundTruthSet,
    pub patches: PatchDataset,
    pub blobs: Vec<Blob>,
    /// Per pixel, 1 + index of the covering blob, or 0.
    pub blob_labels: Vec<u32>,
    pub background_points: Vec<(f64, f64)>,
}

impl SynthScene {
    pub fn blob_pixel_area(&self, i: usize) -> usize {
        self.blob_labels
            .iter()
            .filter(|&&l| l as usize == i + 1)
            .count()
    }
}

const OUTLINE_VERTICES: usize = 48;
const POINT_BUFFER: f64 = 3.0;
const PATCH_CLEAR_TRIES: usize = 200;

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn random_blob(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Blob {
    let semi_major = uniform(rng, cfg.blob_radius_range);
    let semi_minor = semi_major * rng.random_range(0.75..=1.0);
    let n_harm = rng.random_range(3..=5u32);
    let weights: Vec<f64> = (0..n_harm).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let budget = MAX_IRREGULARITY * rng.random_range(0.5..=1.0);
    let harmonics = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            (
                i as u32 + 2,
                budget * w / total,
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    Blob {
        center: (0.0, 0.0),
        semi_major,
        semi_minor,
        rotation: rng.random_range(0.0..PI),
        harmonics,
        darkness: uniform(rng, cfg.blob_darkness_range),
    }
}

/// Smooth field in [0, 1] built from a few random plane waves.
fn background_field(rng: &mut ChaCha8Rng, size: usize) -> impl Fn(f64, f64) -> f64 {
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let theta = rng.random_range(0.0..2.0 * PI);
            let freq = rng.random_range(0.5..2.0) * 2.0 * PI / size as f64;
            (
                freq * theta.cos(),
                freq * theta.sin(),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    move |x, y| {
        0.5 + waves
            .iter()
            .map(|&(kx, ky, ph)| (kx * x + ky * y + ph).sin())
            .sum::<f64>()
            / 6.0
    }
}

fn blob_rgb(level: f64) -> [f64; 3] {
    // reddish shrub canopy; luma offset is 0.299·30 − 0.587·8 − 0.114·30 ≈ 0.86
    [level + 30.0, level - 8.0, level - 30.0]
}

fn soil_rgb(level: f64) -> [f64; 3] {
    // luma offset 0.299·12 − 0.114·20 ≈ 1.31
    [level + 12.0, level, level - 20.0]
}

fn patch_around(size: usize, patch: usize, cx: f64, cy: f64) -> PixelRect {
    let place = |c: f64| ((c - patch as f64 / 2.0).round().max(0.0) as usize).min(size - patch);
    PixelRect::new(place(cx), place(cy), patch, patch)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthScene, SynthError> {
    cfg.validate()?;
    let size = cfg.scene_size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut attempts = 0usize;

    let mut blobs: Vec<Blob> = Vec::with_capacity(cfg.n_blobs);
    while blobs.len() < cfg.n_blobs {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(SynthError::Unsatisfiable {
                what: format!("blob {}", blobs.len() + 1),
                attempts: MAX_ATTEMPTS,
            });
        }
        let mut b = random_blob(&mut rng, cfg);
        // keep the patch around the blob inside the scene
        let margin = (b.extent() + 2.0).max(cfg.patch_size as f64 / 2.0);
        if 2.0 * margin >= size as f64 {
            continue;
        }
        b.center = (
            rng.random_range(margin..size as f64 - margin),
            rng.random_range(margin..size as f64 - margin),
        );
        let clear = blobs.iter().all(|o| {
            let d = ((o.center.0 - b.center.0).powi(2) + (o.center.1 - b.center.1).powi(2)).sqrt();
            d >= o.extent() + b.extent() + cfg.min_separation
        });
        if clear {
            blobs.push(b);
        }
    }

    // Background points first try spots whose whole patch misses every
    // blob; after PATCH_CLEAR_TRIES misses per point only the buffer gap is
    // required.
    let half = cfg.patch_size as f64 / 2.0;
    let mut points = Vec::with_capacity(cfg.n_blobs);
    let mut misses = 0usize;
    while points.len() < cfg.n_blobs {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(SynthError::Unsatisfiable {
                what: format!("background point {}", points.len() + 1),
                attempts: MAX_ATTEMPTS,
            });
        }
        let m = (POINT_BUFFER + 1.0).max(half);
        let p = (
            rng.random_range(m..size as f64 - m),
            rng.random_range(m..size as f64 - m),
        );
        let strict = misses < PATCH_CLEAR_TRIES;
        let clear = blobs.iter().all(|b| {
            let (dx, dy) = ((b.center.0 - p.0).abs(), (b.center.1 - p.1).abs());
            let gap = (dx * dx + dy * dy).sqrt() >= b.extent() + POINT_BUFFER + cfg.min_separation;
            if strict {
                let (ox, oy) = ((dx - half).max(0.0), (dy - half).max(0.0));
                gap && (ox * ox + oy * oy).sqrt() > b.extent() + 1.0
            } else {
                gap
            }
        });
        if clear {
            points.push(p);
            misses = 0;
        } else {
            misses += 1;
        }
    }

    let field = background_field(&mut rng, size);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let clamp3 = 3.0 * cfg.noise_sigma;
    let (bg_lo, bg_hi) = cfg.background_level_range;
    let mut blob_labels = vec![0u32; size * size];
    let mut image = RgbImage::filled(size, size, [0, 0, 0]);
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let hit = blobs.iter().position(|b| {
                (b.center.0 - px).abs() <= b.extent()
                    && (b.center.1 - py).abs() <= b.extent()
                    && b.contains(px, py)
            });
            let n = if cfg.noise_sigma > 0.0 {
                noise.sample(&mut rng).clamp(-clamp3, clamp3)
            } else {
                0.0
            };
            let rgb = match hit {
                Some(i) => {
                    blob_labels[y * size + x] = i as u32 + 1;
                    blob_rgb(blobs[i].darkness + n)
                }
                None => soil_rgb(bg_lo + (bg_hi - bg_lo) * field(px, py) + n),
            };
            image.set_pixel(x, y, rgb.map(|v| v.round().clamp(0.0, 255.0) as u8));
        }
    }

    let gt = GeoTransform::north_up(
        500_000.0,
        4_100_000.0 + size as f64 * cfg.pixel_size,
        cfg.pixel_size,
        -cfg.pixel_size,
    );
    let to_map = |ring: Vec<(f64, f64)>| {
        ring.into_iter()
            .map(|(c, r)| gt.pixel_to_map(c, r))
            .collect::<Vec<_>>()
    };
    let mut polygons = Vec::with_capacity(2 * cfg.n_blobs);
    for (i, b) in blobs.iter().enumerate() {
        polygons.push(
            GroundTruthPolygon::from_open_ring(
                format!("shrub-{}", i + 1),
                ClassLabel::Target,
                to_map(b.outline(OUTLINE_VERTICES)),
            )
            .expect("blob outline is a valid ring"),
        );
    }
    for (i, &(cx, cy)) in points.iter().enumerate() {
        let ring: Vec<(f64, f64)> = (0..8)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / 8.0;
                (cx + POINT_BUFFER * a.cos(), cy + POINT_BUFFER * a.sin())
            })
            .collect();
        polygons.push(
            GroundTruthPolygon::from_open_ring(
                format!("soil-{}", i + 1),
                ClassLabel::Background,
                to_map(ring),
            )
            .expect("buffered point is a valid ring"),
        );
    }

    let mut sites: Vec<GroundTruthPolygon> = polygons
        .iter()
        .filter(|p| p.class == ClassLabel::Target)
        .cloned()
        .collect();
    // background sites tile the blob-free soil, so even the large segments
    // of coarse scales fall mostly inside them
    let cell = (cfg.patch_size / 4).max(4);
    for (row, y0) in (0..size / cell).map(|r| (r, (r * cell) as f64)) {
        for x0 in (0..size / cell).map(|c| (c * cell) as f64) {
            let h = cell as f64 / 2.0;
            let (cx, cy) = (x0 + h, y0 + h);
            let clear = blobs.iter().all(|b| {
                let (ox, oy) = (
                    ((b.center.0 - cx).abs() - h).max(0.0),
                    ((b.center.1 - cy).abs() - h).max(0.0),
                );
                (ox * ox + oy * oy).sqrt() > b.extent() + 1.0
            });
            if clear {
                let ring = vec![
                    (x0, y0),
                    (x0 + 2.0 * h, y0),
                    (x0 + 2.0 * h, y0 + 2.0 * h),
                    (x0, y0 + 2.0 * h),
                ];
                sites.push(
                    GroundTruthPolygon::from_open_ring(
                        format!("soil-cell-{row}-{}", x0 as usize / cell),
                        ClassLabel::Background,
                        to_map(ring),
                    )
                    .expect("square is a valid ring"),
                );
            }
        }
    }

    // Centers keep half a patch from the border, so the clamp only absorbs
    // rounding; the label follows the patch's own center pixel.
    let ps = cfg.patch_size;
    let mut samples = Vec::with_capacity(2 * cfg.n_blobs);
    for &(cx, cy) in blobs.iter().map(|b| &b.center).chain(points.iter()) {
        let r = patch_around(size, ps, cx, cy);
        let label = if blob_labels[(r.y + ps / 2) * size + r.x + ps / 2] != 0 {
            ClassLabel::Target
        } else {
            ClassLabel::Background
        };
        samples.push(LabeledPatch {
            patch: image.crop(r.x, r.y, ps, ps),
            label,
            split: Split::Train,
        });
    }
    let mut patches = PatchDataset { samples };
    patches.assign_split(0.8, cfg.rng_seed);

    let scene = Scene::new(format!("synth-{}", cfg.rng_seed), image, gt);
    Ok(SynthScene {
        scene,
        ground_truth: GroundTruthSet { polygons },
        training_sites: GroundTruthSet { polygons: sites },
        patches,
        blobs,
        blob_labels,
        background_points: points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{self, PreprocessConfig};

    #[test]
    fn empty_scene() {
        let s = generate(&SynthConfig {
            n_blobs: 0,
            scene_size: 128,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(s.ground_truth.polygons.len(), 0);
        assert!(s.patches.is_empty());
        assert!(s.blob_labels.iter().all(|&l| l == 0));
        let gray = preprocess::image_to_gray(&s.scene.image);
        assert!(gray.values.iter().all(|&g| g > 100));
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig {
            scene_size: 160,
            n_blobs: 4,
            min_separation: 12.0,
            ..SynthConfig::default()
        };
        let (a, b) = (generate(&cfg).unwrap(), generate(&cfg).unwrap());
        assert_eq!(a.scene.image, b.scene.image);
        assert_eq!(a.ground_truth, b.ground_truth);
        let c = generate(&SynthConfig { rng_seed: 8, ..cfg }).unwrap();
        assert_ne!(a.scene.image, c.scene.image);
    }

    #[test]
    fn default_scene_yields_one_candidate_per_blob() {
        let cfg = SynthConfig::default();
        assert!(cfg.separated_by(100));
        let s = generate(&cfg).unwrap();
        assert_eq!(s.ground_truth.target_count(), 20);
        assert_eq!(s.ground_truth.polygons.len(), 40);
        let out = preprocess::run(&s.scene, &PreprocessConfig::default()).unwrap();
        assert_eq!(out.candidates.len(), 20);
        assert_eq!(out.all_components, 20);
        for i in 0..20 {
            assert!(s.blob_pixel_area(i) >= 180);
        }
    }

    #[test]
    fn areas_and_patch_labels() {
        for seed in 0..5 {
            let s = generate(&SynthConfig {
                rng_seed: seed,
                ..SynthConfig::default()
            })
            .unwrap();
            for (i, b) in s.blobs.iter().enumerate() {
                let ratio = s.blob_pixel_area(i) as f64 / b.ellipse_area();
                assert!((0.85..=1.15).contains(&ratio), "blob {i} ratio {ratio}");
            }
            assert_eq!(s.patches.count(ClassLabel::Target, None), 20);
            assert_eq!(s.patches.count(ClassLabel::Background, None), 20);
            assert_eq!(s.patches.count(ClassLabel::Target, Some(Split::Train)), 16);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(SynthConfig {
            blob_darkness_range: (40.0, 130.0),
            ..SynthConfig::default()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            scene_size: 60,
            ..SynthConfig::default()
        }
        .validate()
        .is_err());
        let crowded = SynthConfig {
            scene_size: 100,
            n_blobs: 50,
            ..SynthConfig::default()
        };
        assert!(matches!(
            generate(&crowded),
            Err(SynthError::Unsatisfiable { .. })
        ));
    }
}
