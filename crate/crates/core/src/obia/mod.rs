//! Object-based baseline: region-merging segmentation, per-segment
//! features, and rule or nearest-neighbour segment classification.

pub mod classify;
pub mod features;
pub mod gridsearch;
pub mod segment;

use std::path::Path;

use thiserror::Error;

use crate::detect::Detection;
use crate::preprocess::{connected_components, Connectivity};
use crate::raster::{BinaryMask, ClassLabel, RasterError, Scene};

pub use classify::{
    knn_classify, rule_classify, Comparator, KnnModel, Rule, RuleSet, SegmentClassifier,
};
pub use features::{segment_features, Feature, SegmentFeatures};
pub use gridsearch::{grid_search, Backend, GridAxis, GridSearchOutcome, GridSpec};
pub use segment::{segment, segment_observed, SegmentGraph, SegmentationParams};

#[derive(Debug, Error)]
pub enum ObiaError {
    #[error("invalid segmentation parameters: {0}")]
    InvalidParams(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("empty training set")]
    EmptyTraining,
    #[error("no segment overlaps any training polygon")]
    NoTrainingSegments,
    #[error("segment count {0} exceeds the 16-bit label range")]
    TooManySegments(usize),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Segments, features and class per segment.
#[derive(Debug, Clone)]
pub struct ClassifiedScene {
    pub graph: SegmentGraph,
    pub features: Vec<SegmentFeatures>,
    pub classes: Vec<ClassLabel>,
}

impl ClassifiedScene {
    pub fn target_mask(&self) -> BinaryMask {
        let bits = self
            .graph
            .labels
            .iter()
            .map(|&l| self.classes[l as usize] == ClassLabel::Target)
            .collect();
        BinaryMask::new(self.graph.width, self.graph.height, bits)
    }

    /// 8-connected groups of target segments, each a detection with
    /// confidence 1.
    pub fn detections(&self, scene: &Scene) -> Vec<Detection> {
        let cs = connected_components(&self.target_mask(), Connectivity::Eight);
        cs.components
            .iter()
            .map(|c| Detection {
                bbox: c.bbox,
                area: c.area,
                centroid_px: c.centroid,
                centroid_map: scene.geotransform.pixel_to_map(c.centroid.0, c.centroid.1),
                confidence: 1.0,
                pixels: cs.pixels_of(c.id),
            })
            .collect()
    }

    /// `id,n,meanR,meanG,meanB,stdR,stdG,stdB,brightness,glcm_mean,area,class`
    pub fn features_csv(&self) -> String {
        features_csv(&self.features, Some(&self.classes))
    }
}

pub fn classify_scene(
    scene: &Scene,
    params: &SegmentationParams,
    clf: &SegmentClassifier,
) -> Result<ClassifiedScene, ObiaError> {
    let graph = segment(&scene.image, params)?;
    let features = segment_features(&scene.image, &graph);
    let classes = features.iter().map(|f| clf.classify(f)).collect();
    Ok(ClassifiedScene {
        graph,
        features,
        classes,
    })
}

/// Feature table; the class column is empty when `classes` is `None`.
pub fn features_csv(features: &[SegmentFeatures], classes: Option<&[ClassLabel]>) -> String {
    let mut s =
        String::from("id,n,meanR,meanG,meanB,stdR,stdG,stdB,brightness,glcm_mean,area,class\n");
    for (i, f) in features.iter().enumerate() {
        let class = classes.map_or("", |c| c[i].as_str());
        s.push_str(&format!(
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{},{}\n",
            f.id,
            f.n,
            f.mean[0],
            f.mean[1],
            f.mean[2],
            f.std[0],
            f.std[1],
            f.std[2],
            f.brightness,
            f.glcm_mean,
            f.area,
            class
        ));
    }
    s
}

/// 16-bit PNG of segment ids.
pub fn save_label_png(sg: &SegmentGraph, path: &Path) -> Result<(), ObiaError> {
    if sg.len() > u16::MAX as usize + 1 {
        return Err(ObiaError::TooManySegments(sg.len()));
    }
    crate::raster::save_label_png16(sg.width, sg.height, &sg.labels, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GeoTransform, RgbImage};

    #[test]
    fn rules_pick_out_dark_squares() {
        let img = RgbImage::from_fn(40, 40, |x, y| {
            if (5..15).contains(&x) && (5..15).contains(&y)
                || (25..33).contains(&x) && (20..30).contains(&y)
            {
                [105, 70, 50]
            } else {
                [180, 180, 170]
            }
        });
        let scene = Scene::new("s", img, GeoTransform::north_up(0.0, 40.0, 1.0, -1.0));
        let clf = SegmentClassifier::Rules {
            rules: RuleSet::reference(),
        };
        let cs = classify_scene(&scene, &SegmentationParams::default(), &clf).unwrap();
        let dets = cs.detections(&scene);
        assert_eq!(dets.len(), 2);
        assert_eq!(dets[0].area, 100);
        assert_eq!(dets[1].area, 80);
        let csv = cs.features_csv();
        assert_eq!(csv.lines().count(), cs.graph.len() + 1);
        assert!(csv.lines().nth(1).unwrap().ends_with(",background"));
    }
}
