//! Matching detections to ground-truth polygons and reporting TP/FP/FN with
//! precision, recall and F1.

pub mod metrics;
pub mod report;

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::detect::Detection;
use crate::raster::{point_in_ring, GeoTransform, GroundTruthSet, RasterError};

pub use metrics::{f1, f1_counts, precision, recall};
pub use report::{ReportRow, ReportTable};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid match config: {0}")]
    InvalidConfig(String),
    #[error("malformed detections: {0}")]
    MalformedDetections(String),
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchCriterion {
    #[default]
    CentroidInPolygon,
    Iou,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub criterion: MatchCriterion,
    pub iou_threshold: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            criterion: MatchCriterion::CentroidInPolygon,
            iou_threshold: 0.5,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(EvalError::InvalidConfig(format!(
                "iou_threshold must lie in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        Ok(())
    }
}

/// What matching needs to know about a detection, in map coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalDetection {
    pub centroid: (f64, f64),
    pub confidence: f64,
    /// Closed ring; used by the IoU criterion.
    pub footprint: Vec<(f64, f64)>,
}

impl EvalDetection {
    pub fn from_detection(d: &Detection, gt: &GeoTransform) -> Self {
        Self {
            centroid: d.centroid_map,
            confidence: d.confidence,
            footprint: d.footprint(gt),
        }
    }
}

pub fn eval_detections(dets: &[Detection], gt: &GeoTransform) -> Vec<EvalDetection> {
    dets.iter()
        .map(|d| EvalDetection::from_detection(d, gt))
        .collect()
}

/// Reads a FeatureCollection of Polygon detections with a `confidence`
/// property. The `centroid` property is used when present, otherwise the
/// mean of the ring's distinct vertices.
pub fn detections_from_geojson(doc: &Value) -> Result<Vec<EvalDetection>, EvalError> {
    let bad = |m: String| EvalError::MalformedDetections(m);
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(bad("expected a FeatureCollection".into()));
    }
    let feats = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing features array".into()))?;
    feats
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let geom = f
                .get("geometry")
                .ok_or_else(|| bad(format!("feature {i}: missing geometry")))?;
            if geom.get("type").and_then(Value::as_str) != Some("Polygon") {
                return Err(bad(format!("feature {i}: geometry must be a Polygon")));
            }
            let ring: Vec<(f64, f64)> = geom
                .get("coordinates")
                .and_then(|c| c.get(0))
                .and_then(Value::as_array)
                .ok_or_else(|| bad(format!("feature {i}: missing exterior ring")))?
                .iter()
                .map(|p| {
                    match (
                        p.get(0).and_then(Value::as_f64),
                        p.get(1).and_then(Value::as_f64),
                    ) {
                        (Some(x), Some(y)) => Ok((x, y)),
                        _ => Err(bad(format!("feature {i}: non-numeric coordinate"))),
                    }
                })
                .collect::<Result<_, _>>()?;
            if ring.len() < 4 {
                return Err(bad(format!("feature {i}: ring needs at least 4 positions")));
            }
            let props = f.get("properties");
            let confidence = props
                .and_then(|p| p.get("confidence"))
                .and_then(Value::as_f64)
                .ok_or_else(|| bad(format!("feature {i}: missing numeric confidence")))?;
            let centroid = match props
                .and_then(|p| p.get("centroid"))
                .and_then(Value::as_array)
            {
                Some(c) => match (
                    c.first().and_then(Value::as_f64),
                    c.get(1).and_then(Value::as_f64),
                ) {
                    (Some(x), Some(y)) => (x, y),
                    _ => return Err(bad(format!("feature {i}: malformed centroid"))),
                },
                None => {
                    let pts = &ring[..ring.len() - 1];
                    let n = pts.len() as f64;
                    (
                        pts.iter().map(|p| p.0).sum::<f64>() / n,
                        pts.iter().map(|p| p.1).sum::<f64>() / n,
                    )
                }
            };
            Ok(EvalDetection {
                centroid,
                confidence,
                footprint: ring,
            })
        })
        .collect()
}

pub fn load_detections(path: &Path) -> Result<Vec<EvalDetection>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| RasterError::io(path, e))?;
    let doc: Value =
        serde_json::from_str(&text).map_err(|e| EvalError::MalformedDetections(e.to_string()))?;
    detections_from_geojson(&doc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationResult {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Per detection, the index (into the ground-truth set) of its matched polygon.
    pub assignments: Vec<Option<usize>>,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(String, f64)>,
}

impl EvaluationResult {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        Self {
            tp,
            fp,
            fn_,
            precision: precision(tp, fp),
            recall: recall(tp, fn_),
            f1: f1_counts(tp, fp, fn_),
            assignments: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn total_seconds(&self) -> f64 {
        self.timings.iter().map(|t| t.1).sum()
    }
}

fn ring_bounds(r: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    r.iter().fold(
        (
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        ),
        |b, p| (b.0.min(p.0), b.1.min(p.1), b.2.max(p.0), b.3.max(p.1)),
    )
}

/// Samples per axis for the rasterized IoU.
const IOU_GRID: usize = 128;

/// Intersection over union of two rings, estimated on a regular grid of
/// sample points over their joint bounding box.
pub fn raster_iou(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (ba, bb) = (ring_bounds(a), ring_bounds(b));
    if ba.2 < bb.0 || bb.2 < ba.0 || ba.3 < bb.1 || bb.3 < ba.1 {
        return 0.0;
    }
    let (x0, y0) = (ba.0.min(bb.0), ba.1.min(bb.1));
    let (x1, y1) = (ba.2.max(bb.2), ba.3.max(bb.3));
    let (dx, dy) = ((x1 - x0) / IOU_GRID as f64, (y1 - y0) / IOU_GRID as f64);
    let (mut inter, mut union) = (0u64, 0u64);
    for j in 0..IOU_GRID {
        let y = y0 + (j as f64 + 0.5) * dy;
        for i in 0..IOU_GRID {
            let x = x0 + (i as f64 + 0.5) * dx;
            let (ia, ib) = (point_in_ring(a, x, y), point_in_ring(b, x, y));
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Greedy one-to-one matching in descending confidence (ties by index).
/// Only target polygons take part.
pub fn match_detections(
    dets: &[EvalDetection],
    gts: &GroundTruthSet,
    cfg: &MatchConfig,
) -> EvaluationResult {
    let targets: Vec<usize> = gts
        .polygons
        .iter()
        .enumerate()
        .filter(|(_, p)| p.class == crate::raster::ClassLabel::Target)
        .map(|(i, _)| i)
        .collect();
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .total_cmp(&dets[a].confidence)
            .then(a.cmp(&b))
    });
    let mut taken = vec![false; gts.polygons.len()];
    let mut assignments = vec![None; dets.len()];
    for &d in &order {
        let det = &dets[d];
        let chosen = match cfg.criterion {
            MatchCriterion::CentroidInPolygon => targets
                .iter()
                .copied()
                .find(|&t| !taken[t] && gts.polygons[t].contains(det.centroid.0, det.centroid.1)),
            MatchCriterion::Iou => {
                let mut best: Option<(f64, usize)> = None;
                for &t in &targets {
                    if taken[t] {
                        continue;
                    }
                    let iou = raster_iou(&det.footprint, &gts.polygons[t].ring);
                    if iou >= cfg.iou_threshold && best.is_none_or(|(b, _)| iou > b) {
                        best = Some((iou, t));
                    }
                }
                best.map(|b| b.1)
            }
        };
        if let Some(t) = chosen {
            taken[t] = true;
            assignments[d] = Some(t);
        }
    }
    let tp = assignments.iter().filter(|a| a.is_some()).count() as u64;
    let mut r =
        EvaluationResult::from_counts(tp, dets.len() as u64 - tp, targets.len() as u64 - tp);
    r.assignments = assignments;
    r
}

/// True when the detections' extent and the ground truth's extent are
/// disjoint, which usually means mismatched coordinate frames.
pub fn frames_disjoint(dets: &[EvalDetection], gts: &GroundTruthSet) -> bool {
    if dets.is_empty() || gts.polygons.is_empty() {
        return false;
    }
    let pts: Vec<(f64, f64)> = dets.iter().map(|d| d.centroid).collect();
    let a = ring_bounds(&pts);
    let b = gts.polygons.iter().map(|p| p.bounds()).fold(
        (
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        ),
        |acc, r| {
            (
                acc.0.min(r.0),
                acc.1.min(r.1),
                acc.2.max(r.2),
                acc.3.max(r.3),
            )
        },
    );
    a.2 < b.0 || b.2 < a.0 || a.3 < b.1 || b.3 < a.1
}
