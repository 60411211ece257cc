//! Patch augmentation (scale, crop, horizontal flip, brightness) and the
//! labeled patch dataset it operates on.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{load_patch_png, save_patch_png, ClassLabel, Patch, RasterError};
use crate::resample::resize_bilinear;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("scale factor must be >= 1, got {0}")]
    ScaleFactor(f64),
    #[error("crop margin must lie in [0, 0.5), got {0}")]
    CropMargin(f64),
    #[error("brightness factor must be > 0, got {0}")]
    BrightnessFactor(f64),
    #[error("invalid augment config: {0}")]
    InvalidConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dataset manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Upsamples by `factor` and center-crops back to the original size.
pub fn random_scale(p: &Patch, factor: f64) -> Result<Patch, AugmentError> {
    if !(factor.is_finite() && factor >= 1.0) {
        return Err(AugmentError::ScaleFactor(factor));
    }
    let (w, h) = (p.width(), p.height());
    let big_w = ((w as f64 * factor).round() as usize).max(w);
    let big_h = ((h as f64 * factor).round() as usize).max(h);
    if big_w == w && big_h == h {
        return Ok(p.clone());
    }
    let big = resize_bilinear(p, big_w, big_h);
    Ok(big.crop((big_w - w) / 2, (big_h - h) / 2, w, h))
}

/// Removes `floor(margin * dim)` pixels from each edge, then resizes back.
pub fn random_crop(p: &Patch, margin: f64) -> Result<Patch, AugmentError> {
    if !(0.0..0.5).contains(&margin) {
        return Err(AugmentError::CropMargin(margin));
    }
    let (w, h) = (p.width(), p.height());
    let mx = (margin * w as f64).floor() as usize;
    let my = (margin * h as f64).floor() as usize;
    if mx == 0 && my == 0 {
        return Ok(p.clone());
    }
    let inner = p.crop(mx, my, w - 2 * mx, h - 2 * my);
    Ok(resize_bilinear(&inner, w, h))
}

pub fn hflip(p: &Patch) -> Patch {
    let w = p.width();
    Patch::from_fn(w, p.height(), |x, y| p.pixel(w - 1 - x, y))
}

/// `v -> clamp(round(v * factor), 0, 255)` on every channel.
pub fn random_brightness(p: &Patch, factor: f64) -> Result<Patch, AugmentError> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(AugmentError::BrightnessFactor(factor));
    }
    let data = p
        .data()
        .iter()
        .map(|&v| (v as f64 * factor).round().clamp(0.0, 255.0) as u8)
        .collect();
    Ok(Patch::new(p.width(), p.height(), data).expect("same dimensions"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub scale_range: [f64; 2],
    pub crop_range: [f64; 2],
    pub hflip_prob: f64,
    pub brightness_range: [f64; 2],
    pub multiplier: usize,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            scale_range: [1.0, 1.1],
            crop_range: [0.0, 0.1],
            hflip_prob: 0.5,
            brightness_range: [0.9, 1.1],
            multiplier: 30,
            rng_seed: 0,
        }
    }
}

impl AugmentConfig {
    /// A config whose single variant per patch is the patch itself.
    pub fn identity() -> Self {
        Self {
            scale_range: [1.0, 1.0],
            crop_range: [0.0, 0.0],
            hflip_prob: 0.0,
            brightness_range: [1.0, 1.0],
            multiplier: 1,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: &str| Err(AugmentError::InvalidConfig(m.to_string()));
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.scale_range) || self.scale_range[0] < 1.0 {
            return bad("scale_range must be an ordered interval within [1, inf)");
        }
        if !ordered(self.crop_range) || self.crop_range[0] < 0.0 || self.crop_range[1] >= 0.5 {
            return bad("crop_range must be an ordered interval within [0, 0.5)");
        }
        if !ordered(self.brightness_range) || self.brightness_range[0] <= 0.0 {
            return bad("brightness_range must be an ordered interval within (0, inf)");
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return bad("hflip_prob must lie in [0, 1]");
        }
        if self.multiplier < 1 {
            return bad("multiplier must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatch {
    pub patch: Patch,
    pub label: ClassLabel,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PatchDataset {
    pub samples: Vec<LabeledPatch>,
}

impl PatchDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count(&self, label: ClassLabel, split: Option<Split>) -> usize {
        self.samples
            .iter()
            .filter(|s| s.label == label && split.is_none_or(|sp| s.split == sp))
            .count()
    }

    pub fn split(&self, split: Split) -> PatchDataset {
        PatchDataset {
            samples: self
                .samples
                .iter()
                .filter(|s| s.split == split)
                .cloned()
                .collect(),
        }
    }

    /// Assigns a seeded 80/20 train/validation split within each class.
    pub fn assign_split(&mut self, train_fraction: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for label in [ClassLabel::Target, ClassLabel::Background] {
            let mut idx: Vec<usize> = (0..self.samples.len())
                .filter(|&i| self.samples[i].label == label)
                .collect();
            idx.shuffle(&mut rng);
            let n_train = (idx.len() as f64 * train_fraction).round() as usize;
            for (k, &i) in idx.iter().enumerate() {
                self.samples[i].split = if k < n_train {
                    Split::Train
                } else {
                    Split::Validation
                };
            }
        }
    }

    /// Writes `target/` and `background/` PNG directories plus `manifest.csv`.
    pub fn save(&self, dir: &Path) -> Result<(), AugmentError> {
        let manifest_path = dir.join("manifest.csv");
        let manifest_err = |e: &dyn std::fmt::Display| AugmentError::Manifest {
            path: manifest_path.clone(),
            message: e.to_string(),
        };
        for label in [ClassLabel::Target, ClassLabel::Background] {
            let d = dir.join(label.as_str());
            std::fs::create_dir_all(&d).map_err(|e| RasterError::io(&d, e))?;
        }
        let mut wtr = csv::Writer::from_path(&manifest_path).map_err(|e| manifest_err(&e))?;
        wtr.write_record(["path", "label", "split"])
            .map_err(|e| manifest_err(&e))?;
        for (i, s) in self.samples.iter().enumerate() {
            let rel = format!("{}/{:05}.png", s.label.as_str(), i);
            save_patch_png(&s.patch, &dir.join(&rel))?;
            wtr.write_record([rel.as_str(), s.label.as_str(), s.split.as_str()])
                .map_err(|e| manifest_err(&e))?;
        }
        wtr.flush()
            .map_err(|e| RasterError::io(&manifest_path, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, AugmentError> {
        #[derive(Deserialize)]
        struct Row {
            path: String,
            label: String,
            split: Split,
        }
        let manifest_path = dir.join("manifest.csv");
        let manifest_err = |m: String| AugmentError::Manifest {
            path: manifest_path.clone(),
            message: m,
        };
        let mut rdr =
            csv::Reader::from_path(&manifest_path).map_err(|e| manifest_err(e.to_string()))?;
        let mut samples = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| manifest_err(e.to_string()))?;
            let label: ClassLabel = row.label.parse()?;
            samples.push(LabeledPatch {
                patch: load_patch_png(&dir.join(&row.path))?,
                label,
                split: row.split,
            });
        }
        Ok(PatchDataset { samples })
    }
}

fn sample_range(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] >= r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

fn augment_one(src: &LabeledPatch, index: usize, cfg: &AugmentConfig) -> Vec<LabeledPatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ index as u64);
    (0..cfg.multiplier)
        .map(|_| {
            let scale = sample_range(&mut rng, cfg.scale_range);
            let margin = sample_range(&mut rng, cfg.crop_range);
            let flip = rng.random_bool(cfg.hflip_prob);
            let bright = sample_range(&mut rng, cfg.brightness_range);
            // parameters are validated up front, so the transforms cannot fail
            let mut p = random_scale(&src.patch, scale).expect("validated");
            p = random_crop(&p, margin).expect("validated");
            if flip {
                p = hflip(&p);
            }
            p = random_brightness(&p, bright).expect("validated");
            LabeledPatch {
                patch: p,
                label: src.label,
                split: src.split,
            }
        })
        .collect()
}

/// Emits `multiplier` variants per source patch, seeded per patch with
/// `rng_seed ^ index` so the result does not depend on thread count.
pub fn expand_dataset(
    ds: &PatchDataset,
    cfg: &AugmentConfig,
) -> Result<PatchDataset, AugmentError> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(AugmentError::EmptyDataset);
    }
    #[cfg(feature = "parallel")]
    let groups: Vec<Vec<LabeledPatch>> = {
        use rayon::prelude::*;
        ds.samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| augment_one(s, i, cfg))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let groups: Vec<Vec<LabeledPatch>> = ds
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| augment_one(s, i, cfg))
        .collect();
    Ok(PatchDataset {
        samples: groups.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert_eq, proptest};

    fn random_patch(seed: u64, w: usize, h: usize) -> Patch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Patch::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()])
    }

    /// Independent bilinear reference: pixel-center mapping, per-sample clamp.
    fn naive_resize(p: &Patch, ow: usize, oh: usize) -> Patch {
        let sx = p.width() as f64 / ow as f64;
        let sy = p.height() as f64 / oh as f64;
        let px = |x: i64, y: i64, c: usize| {
            let x = x.clamp(0, p.width() as i64 - 1) as usize;
            let y = y.clamp(0, p.height() as i64 - 1) as usize;
            p.pixel(x, y)[c] as f64
        };
        Patch::from_fn(ow, oh, |x, y| {
            let fx = ((x as f64 + 0.5) * sx - 0.5)
                .max(0.0)
                .min(p.width() as f64 - 1.0);
            let fy = ((y as f64 + 0.5) * sy - 0.5)
                .max(0.0)
                .min(p.height() as f64 - 1.0);
            let (x0, y0) = (fx.floor() as i64, fy.floor() as i64);
            let (ax, ay) = (fx - x0 as f64, fy - y0 as f64);
            let mut out = [0u8; 3];
            for (c, o) in out.iter_mut().enumerate() {
                let v = (1.0 - ay) * ((1.0 - ax) * px(x0, y0, c) + ax * px(x0 + 1, y0, c))
                    + ay * ((1.0 - ax) * px(x0, y0 + 1, c) + ax * px(x0 + 1, y0 + 1, c));
                *o = v.round() as u8;
            }
            out
        })
    }

    fn ds_of(n: usize) -> PatchDataset {
        PatchDataset {
            samples: (0..n)
                .map(|i| LabeledPatch {
                    patch: random_patch(i as u64, 8, 8),
                    label: if i % 2 == 0 {
                        ClassLabel::Target
                    } else {
                        ClassLabel::Background
                    },
                    split: Split::Train,
                })
                .collect(),
        }
    }

    #[test]
    fn scale_examples() {
        let p = random_patch(1, 80, 80);
        assert_eq!(random_scale(&p, 1.0).unwrap(), p);
        let expected = naive_resize(&p, 88, 88).crop(4, 4, 80, 80);
        assert_eq!(random_scale(&p, 1.1).unwrap(), expected);
        let flat = Patch::filled(80, 80, [30, 60, 90]);
        assert_eq!(random_scale(&flat, 1.07).unwrap(), flat);
        assert!(random_scale(&p, 0.9).is_err());
    }

    #[test]
    fn crop_examples() {
        let p = random_patch(2, 80, 80);
        assert_eq!(random_crop(&p, 0.0).unwrap(), p);
        let expected = naive_resize(&p.crop(8, 8, 64, 64), 80, 80);
        assert_eq!(random_crop(&p, 0.1).unwrap(), expected);
        assert!(random_crop(&p, 0.5).is_err());
        assert!(random_crop(&p, -0.1).is_err());
    }

    #[test]
    fn flip_examples() {
        let half = Patch::from_fn(4, 2, |x, _| if x < 2 { [0; 3] } else { [255; 3] });
        let flipped = hflip(&half);
        assert_eq!(flipped.pixel(0, 0), [255; 3]);
        assert_eq!(flipped.pixel(3, 1), [0; 3]);
        let sym = Patch::from_fn(5, 3, |x, y| {
            [(x as i32 - 2).unsigned_abs() as u8 * 10, y as u8, 0]
        });
        assert_eq!(hflip(&sym), sym);
    }

    #[test]
    fn brightness_examples() {
        let p = Patch::filled(2, 2, [200, 100, 0]);
        assert_eq!(random_brightness(&p, 1.0).unwrap(), p);
        assert_eq!(random_brightness(&p, 1.5).unwrap().pixel(0, 0)[0], 255);
        assert_eq!(random_brightness(&p, 0.9).unwrap().pixel(0, 0)[1], 90);
        assert!(random_brightness(&p, 0.0).is_err());
    }

    #[test]
    fn expansion_size_and_determinism() {
        let ds = ds_of(200);
        let cfg = AugmentConfig {
            rng_seed: 11,
            ..Default::default()
        };
        let a = expand_dataset(&ds, &cfg).unwrap();
        assert_eq!(a.len(), 6000);
        assert_eq!(a, expand_dataset(&ds, &cfg).unwrap());
        for (k, s) in a.samples.iter().enumerate() {
            assert_eq!(s.label, ds.samples[k / 30].label);
        }
        assert_eq!(expand_dataset(&ds, &AugmentConfig::identity()).unwrap(), ds);
        assert!(matches!(
            expand_dataset(&PatchDataset::default(), &cfg),
            Err(AugmentError::EmptyDataset)
        ));
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = ds_of(10);
        ds.assign_split(0.8, 3);
        assert_eq!(ds.count(ClassLabel::Target, Some(Split::Train)), 4);
        assert_eq!(ds.count(ClassLabel::Target, Some(Split::Validation)), 1);
        ds.save(dir.path()).unwrap();
        assert!(dir.path().join("target").is_dir());
        assert_eq!(PatchDataset::load(dir.path()).unwrap(), ds);
    }

    proptest! {
        #[test]
        fn transforms_preserve_shape(seed in any::<u64>(), w in 2usize..24, h in 2usize..24,
                                     s in 1.0f64..1.5, m in 0.0f64..0.49, b in 0.05f64..4.0) {
            let p = random_patch(seed, w, h);
            for q in [random_scale(&p, s).unwrap(), random_crop(&p, m).unwrap(),
                      hflip(&p), random_brightness(&p, b).unwrap()] {
                prop_assert_eq!((q.width(), q.height()), (w, h));
            }
            prop_assert_eq!(hflip(&hflip(&p)), p);
        }
    }
}
