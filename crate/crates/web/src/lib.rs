//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! A [`Demo`] owns one synthetic scene and a classifier trained on its
//! patches; each operation returns an RGBA overlay the page draws over the
//! scene canvas, and a one-line summary.

use shrubmap::augment::{expand_dataset, AugmentConfig, Split};
use shrubmap::classifier::{self, BuiltinModel, TrainConfig};
use shrubmap::detect::{self, DetectionConfig};
use shrubmap::eval::{self, EvaluationResult, MatchConfig};
use shrubmap::obia::{self, SegmentationParams};
use shrubmap::preprocess::PreprocessConfig;
use shrubmap::raster::RgbImage;
use shrubmap::synth::{self, SynthConfig, SynthScene};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn summary(r: &EvaluationResult) -> String {
    let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.1}%", 100.0 * v));
    format!(
        "TP {} FP {} FN {}, precision {}, recall {}, F1 {}",
        r.tp,
        r.fp,
        r.fn_,
        pct(r.precision),
        pct(r.recall),
        pct(r.f1)
    )
}

#[wasm_bindgen]
pub struct Demo {
    synth: SynthScene,
    model: BuiltinModel,
    overlay: Vec<u8>,
    summary: String,
}

impl Demo {
    fn clear(&mut self) {
        self.overlay = vec![0; self.size() * self.size() * 4];
    }

    fn paint(&mut self, i: usize, rgba: [u8; 4]) {
        self.overlay[4 * i..4 * i + 4].copy_from_slice(&rgba);
    }

    fn outline_box(&mut self, x0: usize, y0: usize, w: usize, h: usize, rgba: [u8; 4]) {
        let n = self.size();
        for x in x0..(x0 + w).min(n) {
            self.paint(y0 * n + x, rgba);
            self.paint((y0 + h - 1).min(n - 1) * n + x, rgba);
        }
        for y in y0..(y0 + h).min(n) {
            self.paint(y * n + x0, rgba);
            self.paint(y * n + (x0 + w - 1).min(n - 1), rgba);
        }
    }

    fn score(&self, dets: &[detect::Detection]) -> EvaluationResult {
        let gt = &self.synth.scene.geotransform;
        eval::match_detections(
            &eval::eval_detections(dets, gt),
            &self.synth.ground_truth,
            &MatchConfig::default(),
        )
    }
}

#[wasm_bindgen]
impl Demo {
    /// Generates a scene and trains the built-in classifier on its patches.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, n_blobs: u32) -> Result<Demo, JsError> {
        let cfg = SynthConfig {
            n_blobs: n_blobs as usize,
            rng_seed: seed as u64,
            ..SynthConfig::default()
        };
        let synth = synth::generate(&cfg).map_err(js_err)?;
        let aug = AugmentConfig {
            multiplier: 10,
            rng_seed: seed as u64,
            ..AugmentConfig::default()
        };
        let mut ds = expand_dataset(&synth.patches.split(Split::Train), &aug).map_err(js_err)?;
        ds.samples
            .extend(synth.patches.split(Split::Validation).samples);
        let model = if n_blobs == 0 {
            BuiltinModel::zeros(cfg.patch_size)
        } else {
            let tc = TrainConfig {
                alpha: 0.05,
                max_iterations: 600,
                rng_seed: seed as u64,
                ..TrainConfig::default()
            };
            classifier::train(&ds, &tc).map_err(js_err)?.model
        };
        let mut d = Demo {
            synth,
            model,
            overlay: Vec::new(),
            summary: String::new(),
        };
        d.clear();
        Ok(d)
    }

    /// Side length of the square scene.
    pub fn size(&self) -> usize {
        self.synth.scene.width()
    }

    /// Scene pixels as RGBA.
    pub fn scene_rgba(&self) -> Vec<u8> {
        rgba(&self.synth.scene.image)
    }

    pub fn overlay_rgba(&self) -> Vec<u8> {
        self.overlay.clone()
    }

    pub fn summary(&self) -> String {
        self.summary.clone()
    }

    /// Dark-pixel mask and candidate patches, scored by the classifier.
    pub fn candidates(&mut self, gray_threshold: u8, min_area: usize) -> Result<(), JsError> {
        let pp = PreprocessConfig {
            gray_threshold,
            min_area,
            ..PreprocessConfig::default()
        };
        let run = detect::detect_with_candidates(&self.synth.scene, &pp, &self.model, 0.5)
            .map_err(js_err)?;
        let out = shrubmap::preprocess::run(&self.synth.scene, &pp).map_err(js_err)?;
        self.clear();
        for (i, &b) in out.mask.bits.iter().enumerate() {
            if b {
                self.paint(i, [255, 230, 0, 90]);
            }
        }
        for c in &out.candidates {
            self.outline_box(
                c.rect.x,
                c.rect.y,
                c.rect.width,
                c.rect.height,
                [0, 160, 255, 200],
            );
        }
        for d in &run.detections {
            self.outline_box(
                d.bbox.x,
                d.bbox.y,
                d.bbox.width,
                d.bbox.height,
                [0, 255, 80, 255],
            );
        }
        self.summary = format!(
            "{} candidates, {} classifier calls, {} detections. {}",
            run.candidates,
            run.classifier_calls,
            run.detections.len(),
            summary(&self.score(&run.detections))
        );
        Ok(())
    }

    /// Single-size sliding-window heatmap, thresholded at 0.5.
    pub fn sliding(&mut self, window: usize, stride_fraction: f64) -> Result<(), JsError> {
        let cfg = DetectionConfig {
            window_sizes: vec![window],
            stride_fraction,
            ..DetectionConfig::default()
        };
        let run = detect::detect_sliding(&self.synth.scene, &cfg, &self.model).map_err(js_err)?;
        self.clear();
        for (i, &p) in run.heatmap.values.iter().enumerate() {
            let a = (p * 160.0).round() as u8;
            self.paint(
                i,
                if p > 0.5 {
                    [255, 40, 40, a]
                } else {
                    [40, 80, 255, a / 2]
                },
            );
        }
        for d in &run.detections {
            self.outline_box(
                d.bbox.x,
                d.bbox.y,
                d.bbox.width,
                d.bbox.height,
                [0, 255, 80, 255],
            );
        }
        self.summary = format!(
            "{} windows of {window} px, {} detections. {}",
            run.classifier_calls,
            run.detections.len(),
            summary(&self.score(&run.detections))
        );
        Ok(())
    }

    /// Region-merging segmentation; draws segment boundaries.
    pub fn segment(&mut self, scale: f64, shape: f64, compactness: f64) -> Result<(), JsError> {
        let sg = obia::segment(
            &self.synth.scene.image,
            &SegmentationParams::new(scale, shape, compactness),
        )
        .map_err(js_err)?;
        self.clear();
        let n = self.size();
        for y in 0..n {
            for x in 0..n {
                let l = sg.labels[y * n + x];
                let edge = (x + 1 < n && sg.labels[y * n + x + 1] != l)
                    || (y + 1 < n && sg.labels[(y + 1) * n + x] != l);
                if edge {
                    self.paint(y * n + x, [255, 255, 255, 220]);
                }
            }
        }
        self.summary = format!("{} segments after {} merges", sg.len(), sg.merges);
        Ok(())
    }
}

fn rgba(img: &RgbImage) -> Vec<u8> {
    img.data()
        .chunks_exact(3)
        .flat_map(|p| [p[0], p[1], p[2], 255])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operations_fill_the_overlay() {
        let mut d = Demo::new(3, 6).map_err(|_| "init").unwrap();
        let n = d.size();
        assert_eq!(d.scene_rgba().len(), n * n * 4);
        d.candidates(100, 180).map_err(|_| "candidates").unwrap();
        assert!(d.summary().starts_with("6 candidates"), "{}", d.summary());
        assert!(d.overlay_rgba().iter().any(|&v| v != 0));
        d.sliding(28, 0.7).map_err(|_| "sliding").unwrap();
        assert!(d.summary().contains("detections"));
        d.segment(40.0, 0.3, 0.8).map_err(|_| "segment").unwrap();
        assert!(d.summary().contains("segments"));
        assert_eq!(d.overlay_rgba().len(), n * n * 4);
    }
}
