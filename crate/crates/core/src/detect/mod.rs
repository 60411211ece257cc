//! Sliding-window scanning with heatmap assembly, and the candidate-patch
//! fast path.

pub mod grid;
pub mod heatmap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::classifier::{Classifier, ClassifierError};
use crate::preprocess::{self, Connectivity, PreprocessConfig, PreprocessError};
use crate::raster::{BinaryMask, GeoTransform, PixelRect, Scene};
use crate::resample::resize_bilinear;

pub use grid::{stride_for, window_grid, WindowGrid};
pub use heatmap::{
    assemble_heatmap, threshold_heatmap, ProbabilityHeatmap, ScaleFusion, ScaleScan,
};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("window {window} does not fit a {width}x{height} scene")]
    WindowTooLarge {
        window: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid detection config: {0}")]
    InvalidConfig(String),
    #[error("no scans to assemble")]
    EmptyScans,
    #[error("classifier failed on window at ({}, {}): {source}", offset.0, offset.1)]
    Classifier {
        offset: (usize, usize),
        #[source]
        source: ClassifierError,
    },
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

pub const DEFAULT_WINDOW_SIZES: [usize; 10] = [385, 194, 129, 97, 77, 64, 55, 48, 42, 38];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub window_sizes: Vec<usize>,
    pub stride_fraction: f64,
    pub probability_threshold: f64,
    pub scale_fusion: ScaleFusion,
    /// Windows per classifier call.
    pub batch_size: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            window_sizes: DEFAULT_WINDOW_SIZES.to_vec(),
            stride_fraction: 0.7,
            probability_threshold: 0.5,
            scale_fusion: ScaleFusion::Mean,
            batch_size: 256,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        let bad = |m: String| Err(DetectError::InvalidConfig(m));
        if self.window_sizes.is_empty() || self.window_sizes.contains(&0) {
            return bad("window_sizes must be a nonempty list of sizes >= 1".into());
        }
        if !(self.stride_fraction > 0.0 && self.stride_fraction <= 1.0) {
            return bad(format!(
                "stride_fraction must lie in (0, 1], got {}",
                self.stride_fraction
            ));
        }
        if !(self.probability_threshold > 0.0 && self.probability_threshold < 1.0) {
            return bad(format!(
                "probability_threshold must lie in (0, 1), got {}",
                self.probability_threshold
            ));
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1".into());
        }
        Ok(())
    }
}

fn window_patch(scene: &Scene, rect: PixelRect, patch_size: usize) -> crate::raster::Patch {
    let crop = scene.image.crop(rect.x, rect.y, rect.width, rect.height);
    resize_bilinear(&crop, patch_size, patch_size)
}

fn score_batch(
    scene: &Scene,
    rects: &[PixelRect],
    clf: &dyn Classifier,
) -> Result<Vec<f64>, DetectError> {
    let patches: Vec<_> = rects
        .iter()
        .map(|&r| window_patch(scene, r, clf.patch_size()))
        .collect();
    clf.predict_proba(&patches).map_err(|source| {
        let at = match &source {
            ClassifierError::BadProbability { index, .. } => rects[*index],
            _ => rects[0],
        };
        DetectError::Classifier {
            offset: (at.x, at.y),
            source,
        }
    })
}

fn score_rects(
    scene: &Scene,
    rects: &[PixelRect],
    clf: &dyn Classifier,
    batch: usize,
) -> Result<Vec<f64>, DetectError> {
    let chunks: Vec<&[PixelRect]> = rects.chunks(batch.max(1)).collect();
    #[cfg(feature = "parallel")]
    let results: Vec<Result<Vec<f64>, DetectError>> = if clf.concurrent() {
        use rayon::prelude::*;
        chunks
            .par_iter()
            .map(|c| score_batch(scene, c, clf))
            .collect()
    } else {
        chunks.iter().map(|c| score_batch(scene, c, clf)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Vec<f64>, DetectError>> =
        chunks.iter().map(|c| score_batch(scene, c, clf)).collect();
    let mut out = Vec::with_capacity(rects.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Scores every window of `grid`, each resampled to the classifier's patch size.
pub fn scan(
    scene: &Scene,
    grid: &WindowGrid,
    clf: &dyn Classifier,
    batch_size: usize,
) -> Result<Vec<f64>, DetectError> {
    let w = grid.window_size;
    if w > scene.width().min(scene.height()) {
        return Err(DetectError::WindowTooLarge {
            window: w,
            width: scene.width(),
            height: scene.height(),
        });
    }
    let rects: Vec<PixelRect> = grid
        .offsets
        .iter()
        .map(|&(c, r)| PixelRect::new(c, r, w, w))
        .collect();
    score_rects(scene, &rects, clf, batch_size)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: PixelRect,
    pub area: usize,
    pub centroid_px: (f64, f64),
    pub centroid_map: (f64, f64),
    pub confidence: f64,
    /// Linear pixel indices of the region; empty when read back from a file.
    pub pixels: Vec<u32>,
}

impl Detection {
    /// Closed map-space ring around the bounding box.
    pub fn footprint(&self, gt: &GeoTransform) -> Vec<(f64, f64)> {
        let (x0, y0) = (self.bbox.x as f64, self.bbox.y as f64);
        let (x1, y1) = (self.bbox.right() as f64, self.bbox.bottom() as f64);
        [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
            .iter()
            .map(|&(c, r)| gt.pixel_to_map(c, r))
            .collect()
    }
}

/// 8-connected positive regions, each with its mean heatmap value.
pub fn extract_detections(
    mask: &BinaryMask,
    hm: &ProbabilityHeatmap,
    gt: &GeoTransform,
) -> Vec<Detection> {
    assert_eq!(
        (mask.width, mask.height),
        (hm.width, hm.height),
        "mask and heatmap sizes differ"
    );
    let cs = preprocess::connected_components(mask, Connectivity::Eight);
    cs.components
        .iter()
        .map(|c| {
            let pixels = cs.pixels_of(c.id);
            let confidence =
                pixels.iter().map(|&i| hm.values[i as usize]).sum::<f64>() / pixels.len() as f64;
            Detection {
                bbox: c.bbox,
                area: c.area,
                centroid_px: c.centroid,
                centroid_map: gt.pixel_to_map(c.centroid.0, c.centroid.1),
                confidence,
                pixels,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CandidateRun {
    pub detections: Vec<Detection>,
    pub candidates: usize,
    pub classifier_calls: usize,
    pub scores: Vec<f64>,
}

/// Scores one patch per surviving component; components scoring strictly
/// above `threshold` become detections with their pixels as region.
pub fn detect_with_candidates(
    scene: &Scene,
    pp: &PreprocessConfig,
    clf: &dyn Classifier,
    threshold: f64,
) -> Result<CandidateRun, DetectError> {
    let out = preprocess::run(scene, pp)?;
    let rects: Vec<PixelRect> = out.candidates.iter().map(|c| c.rect).collect();
    let scores = if rects.is_empty() {
        Vec::new()
    } else {
        score_rects(scene, &rects, clf, 256)?
    };
    let mut detections = Vec::new();
    for (cand, &p) in out.candidates.iter().zip(&scores) {
        if p > threshold {
            let comp = out
                .components
                .get(cand.component_id)
                .expect("candidate refers to a kept component");
            detections.push(Detection {
                bbox: comp.bbox,
                area: comp.area,
                centroid_px: comp.centroid,
                centroid_map: scene
                    .geotransform
                    .pixel_to_map(comp.centroid.0, comp.centroid.1),
                confidence: p,
                pixels: out.components.pixels_of(comp.id),
            });
        }
    }
    Ok(CandidateRun {
        detections,
        candidates: rects.len(),
        classifier_calls: rects.len(),
        scores,
    })
}

#[derive(Debug, Clone)]
pub struct SlidingRun {
    pub heatmap: ProbabilityHeatmap,
    pub scans: Vec<ScaleScan>,
    pub detections: Vec<Detection>,
    pub classifier_calls: usize,
}

/// Scans all configured window sizes, fuses them into one heatmap and
/// extracts detections.
pub fn detect_sliding(
    scene: &Scene,
    cfg: &DetectionConfig,
    clf: &dyn Classifier,
) -> Result<SlidingRun, DetectError> {
    cfg.validate()?;
    let mut scans = Vec::with_capacity(cfg.window_sizes.len());
    for &w in &cfg.window_sizes {
        let grid = window_grid(scene.width(), scene.height(), w, cfg.stride_fraction)?;
        let scores = scan(scene, &grid, clf, cfg.batch_size)?;
        scans.push(ScaleScan { grid, scores });
    }
    let heatmap = assemble_heatmap(scene.width(), scene.height(), &scans, cfg.scale_fusion)?;
    let mask = threshold_heatmap(&heatmap, cfg.probability_threshold);
    let detections = extract_detections(&mask, &heatmap, &scene.geotransform);
    let classifier_calls = scans.iter().map(|s| s.scores.len()).sum();
    Ok(SlidingRun {
        heatmap,
        scans,
        detections,
        classifier_calls,
    })
}

/// FeatureCollection with one bounding-box polygon per detection.
pub fn detections_to_geojson(dets: &[Detection], gt: &GeoTransform) -> Value {
    let features: Vec<Value> = dets
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let ring: Vec<[f64; 2]> = d.footprint(gt).iter().map(|&(x, y)| [x, y]).collect();
            json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": [ring] },
                "properties": {
                    "id": i,
                    "confidence": d.confidence,
                    "area_px": d.area,
                    "centroid": [d.centroid_map.0, d.centroid_map.1],
                    "centroid_px": [d.centroid_px.0, d.centroid_px.1],
                    "bbox_px": [d.bbox.x, d.bbox.y, d.bbox.width, d.bbox.height],
                }
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Patch, RgbImage};

    struct Constant(f64);
    impl Classifier for Constant {
        fn patch_size(&self) -> usize {
            80
        }
        fn predict_proba(&self, patches: &[Patch]) -> Result<Vec<f64>, ClassifierError> {
            assert!(patches.iter().all(|p| p.width() == 80 && p.height() == 80));
            Ok(vec![self.0; patches.len()])
        }
    }

    /// Mean darkness of the patch, so dark windows score high.
    struct Darkness;
    impl Classifier for Darkness {
        fn patch_size(&self) -> usize {
            80
        }
        fn predict_proba(&self, patches: &[Patch]) -> Result<Vec<f64>, ClassifierError> {
            Ok(patches
                .iter()
                .map(|p| {
                    1.0 - p.data().iter().map(|&v| v as f64).sum::<f64>()
                        / (p.data().len() as f64 * 255.0)
                })
                .collect())
        }
    }

    struct Broken;
    impl Classifier for Broken {
        fn patch_size(&self) -> usize {
            80
        }
        fn predict_proba(&self, patches: &[Patch]) -> Result<Vec<f64>, ClassifierError> {
            let mut v = vec![0.5; patches.len()];
            v[patches.len() - 1] = f64::NAN;
            crate::classifier::check_probabilities(&v)?;
            Ok(v)
        }
    }

    fn scene(w: usize, h: usize) -> Scene {
        Scene::new(
            "s",
            RgbImage::filled(w, h, [200, 200, 200]),
            GeoTransform::north_up(0.0, 0.0, 1.0, -1.0),
        )
    }

    #[test]
    fn constant_scores_and_cardinality() {
        let s = scene(1900, 1900);
        let g = window_grid(1900, 1900, 385, 0.7).unwrap();
        let scores = scan(&s, &g, &Constant(0.7), 16).unwrap();
        assert_eq!(scores, vec![0.7; 49]);
    }

    #[test]
    fn failing_offset_is_reported() {
        let s = scene(30, 30);
        let g = window_grid(30, 30, 10, 0.7).unwrap();
        match scan(&s, &g, &Broken, 1000) {
            Err(DetectError::Classifier { offset, .. }) => {
                assert_eq!(offset, *g.offsets.last().unwrap())
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn detections_from_mask() {
        let gt = GeoTransform::north_up(0.0, 0.0, 1.0, -1.0);
        let empty = ProbabilityHeatmap {
            width: 4,
            height: 4,
            values: vec![0.0; 16],
            coverage: vec![1; 16],
        };
        assert!(extract_detections(&BinaryMask::empty(4, 4), &empty, &gt).is_empty());

        let mut values = vec![0.0; 100];
        for y in 2..5 {
            for x in 2..5 {
                values[y * 10 + x] = 0.9;
            }
        }
        let hm = ProbabilityHeatmap {
            width: 10,
            height: 10,
            values,
            coverage: vec![1; 100],
        };
        let d = extract_detections(&threshold_heatmap(&hm, 0.5), &hm, &gt);
        assert_eq!(d.len(), 1);
        assert!((d[0].confidence - 0.9).abs() < 1e-12);
        assert_eq!(d[0].centroid_map, (3.5, -3.5));
    }

    #[test]
    fn candidate_path_threshold_and_counts() {
        let mut img = RgbImage::filled(200, 200, [200, 200, 200]);
        for y in 50..70 {
            for x in 50..70 {
                img.set_pixel(x, y, [20, 20, 20]);
            }
        }
        let s = Scene::new("s", img, GeoTransform::north_up(0.0, 0.0, 1.0, -1.0));
        let pp = PreprocessConfig::default();
        let at_half = detect_with_candidates(&s, &pp, &Constant(0.5), 0.5).unwrap();
        assert!(at_half.detections.is_empty());
        assert_eq!(at_half.classifier_calls, 1);
        let above = detect_with_candidates(&s, &pp, &Constant(0.51), 0.5).unwrap();
        assert_eq!(above.detections.len(), 1);
        assert_eq!(above.detections[0].area, 400);

        let blank = detect_with_candidates(&scene(100, 100), &pp, &Constant(0.9), 0.5).unwrap();
        assert!(blank.detections.is_empty());
        assert_eq!(blank.classifier_calls, 0);
    }

    #[test]
    fn sliding_finds_dark_square() {
        let mut img = RgbImage::filled(120, 120, [230, 230, 230]);
        for y in 40..80 {
            for x in 40..80 {
                img.set_pixel(x, y, [0, 0, 0]);
            }
        }
        let s = Scene::new("s", img, GeoTransform::north_up(0.0, 0.0, 1.0, -1.0));
        let cfg = DetectionConfig {
            window_sizes: vec![40],
            stride_fraction: 1.0,
            ..Default::default()
        };
        let run = detect_sliding(&s, &cfg, &Darkness).unwrap();
        assert_eq!(run.detections.len(), 1);
        assert_eq!(run.detections[0].bbox, PixelRect::new(40, 40, 40, 40));
        assert_eq!(run.detections[0].centroid_px, (60.0, 60.0));
        assert_eq!(run.classifier_calls, run.scans[0].grid.len());
    }

    #[test]
    fn geojson_export() {
        let gt = GeoTransform::north_up(10.0, 20.0, 0.5, -0.5);
        let d = Detection {
            bbox: PixelRect::new(1, 2, 3, 4),
            area: 7,
            centroid_px: (2.5, 4.0),
            centroid_map: gt.pixel_to_map(2.5, 4.0),
            confidence: 0.75,
            pixels: vec![],
        };
        let doc = detections_to_geojson(std::slice::from_ref(&d), &gt);
        let f = &doc["features"][0];
        assert_eq!(f["properties"]["confidence"], 0.75);
        assert_eq!(f["geometry"]["coordinates"][0][0], json!([10.5, 19.0]));
        assert_eq!(f["geometry"]["coordinates"][0].as_array().unwrap().len(), 5);
    }
}
