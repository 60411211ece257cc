//! Exhaustive search over segmentation parameters, scoring each combination
//! by the training F1 of a classifier fitted on its segments.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::classify::{Comparator, KnnModel, Rule, RuleSet, SegmentClassifier};
use super::features::{segment_features, Feature, SegmentFeatures};
use super::segment::{segment, SegmentGraph, SegmentationParams};
use super::ObiaError;
use crate::eval::metrics::f1_counts;
use crate::raster::{ClassLabel, GroundTruthSet, Scene};

/// Either an inclusive arithmetic range or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridAxis {
    Range { start: f64, stop: f64, step: f64 },
    List(Vec<f64>),
}

impl GridAxis {
    pub fn single(v: f64) -> Self {
        GridAxis::List(vec![v])
    }

    /// Range values are `start + i·step`, snapped to 1e-9 so that decimal
    /// steps print cleanly.
    pub fn values(&self) -> Result<Vec<f64>, ObiaError> {
        let v = match self {
            GridAxis::List(v) => v.clone(),
            GridAxis::Range { start, stop, step } => {
                if !(*step > 0.0 && start.is_finite() && stop.is_finite() && stop >= start) {
                    return Err(ObiaError::InvalidParams(format!(
                        "bad range {start}..={stop} step {step}"
                    )));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                (0..n)
                    .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
                    .collect()
            }
        };
        if v.is_empty() {
            return Err(ObiaError::InvalidParams("grid axis is empty".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub scale: GridAxis,
    pub shape: GridAxis,
    pub compactness: GridAxis,
}

impl Default for GridSpec {
    /// Scale 80..=160 by 5, shape and compactness 0.1..=0.9 by 0.1.
    fn default() -> Self {
        Self {
            scale: GridAxis::Range {
                start: 80.0,
                stop: 160.0,
                step: 5.0,
            },
            shape: GridAxis::Range {
                start: 0.1,
                stop: 0.9,
                step: 0.1,
            },
            compactness: GridAxis::Range {
                start: 0.1,
                stop: 0.9,
                step: 0.1,
            },
        }
    }
}

impl GridSpec {
    pub fn single(p: SegmentationParams) -> Self {
        Self {
            scale: GridAxis::single(p.scale),
            shape: GridAxis::single(p.shape_weight),
            compactness: GridAxis::single(p.compactness_weight),
        }
    }

    /// Cartesian product, scale outermost, compactness innermost.
    pub fn combos(&self) -> Result<Vec<SegmentationParams>, ObiaError> {
        let (s, h, c) = (
            self.scale.values()?,
            self.shape.values()?,
            self.compactness.values()?,
        );
        let mut out = Vec::with_capacity(s.len() * h.len() * c.len());
        for &scale in &s {
            for &shape in &h {
                for &cmp in &c {
                    let p = SegmentationParams::new(scale, shape, cmp);
                    p.validate()?;
                    out.push(p);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Backend {
    /// Conjunction of decision stumps, fitted greedily.
    #[default]
    Rules,
    Knn {
        k: usize,
    },
}

/// Per-pixel class from the first polygon containing the pixel center.
pub fn class_raster(scene: &Scene, gts: &GroundTruthSet) -> Vec<Option<ClassLabel>> {
    let (w, h) = (scene.width(), scene.height());
    let gt = &scene.geotransform;
    let mut out = vec![None; w * h];
    for poly in &gts.polygons {
        let (mut c0, mut r0, mut c1, mut r1) = (
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        );
        for &(x, y) in &poly.ring {
            let (c, r) = gt.map_to_pixel(x, y);
            (c0, r0, c1, r1) = (c0.min(c), r0.min(r), c1.max(c), r1.max(r));
        }
        let clamp = |v: f64, hi: usize| v.max(0.0).min(hi as f64) as usize;
        let (x0, x1) = (clamp(c0.floor(), w), clamp(c1.ceil(), w));
        let (y0, y1) = (clamp(r0.floor(), h), clamp(r1.ceil(), h));
        for y in y0..y1 {
            for x in x0..x1 {
                let i = y * w + x;
                if out[i].is_none() {
                    let (mx, my) = gt.pixel_center(x, y);
                    if poly.contains(mx, my) {
                        out[i] = Some(poly.class);
                    }
                }
            }
        }
    }
    out
}

/// Segments with more than half of their pixels inside polygons of one
/// class, paired with that class.
pub fn training_segments(
    sg: &SegmentGraph,
    feats: &[SegmentFeatures],
    classes: &[Option<ClassLabel>],
) -> Vec<(SegmentFeatures, ClassLabel)> {
    let mut counts = vec![[0u64; 2]; sg.len()];
    for (&l, c) in sg.labels.iter().zip(classes) {
        match c {
            Some(ClassLabel::Target) => counts[l as usize][0] += 1,
            Some(ClassLabel::Background) => counts[l as usize][1] += 1,
            None => {}
        }
    }
    feats
        .iter()
        .zip(&counts)
        .filter_map(|(f, &[t, b])| {
            if 2 * t > f.n {
                Some((f.clone(), ClassLabel::Target))
            } else if 2 * b > f.n {
                Some((f.clone(), ClassLabel::Background))
            } else {
                None
            }
        })
        .collect()
}

fn training_f1(predicted: impl Iterator<Item = (ClassLabel, ClassLabel)>) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, t) in predicted {
        match (p, t) {
            (ClassLabel::Target, ClassLabel::Target) => tp += 1,
            (ClassLabel::Target, ClassLabel::Background) => fp += 1,
            (ClassLabel::Background, ClassLabel::Target) => fn_ += 1,
            _ => {}
        }
    }
    f1_counts(tp, fp, fn_).unwrap_or(0.0)
}

/// Best single threshold on one feature among `active` samples, as
/// `(f1, threshold)`. Only samples passing the threshold stay positive;
/// `total_targets` counts all targets, including those already rejected.
fn best_stump(
    values: &mut [(f64, bool)],
    op: Comparator,
    total_targets: u64,
) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    // order so that a prefix is the accepted set
    match op {
        Comparator::Lt => values.sort_by(|a, b| a.0.total_cmp(&b.0)),
        Comparator::Gt => values.sort_by(|a, b| b.0.total_cmp(&a.0)),
    }
    let mut best: Option<(f64, f64)> = None;
    let (mut tp, mut fp) = (0u64, 0u64);
    for i in 0..values.len() {
        if values[i].1 {
            tp += 1;
        } else {
            fp += 1;
        }
        if i + 1 < values.len() && values[i + 1].0 == values[i].0 {
            continue;
        }
        let threshold = match values.get(i + 1) {
            Some(next) => (values[i].0 + next.0) / 2.0,
            None => match op {
                Comparator::Lt => values[i].0 + 1.0,
                Comparator::Gt => values[i].0 - 1.0,
            },
        };
        let f = f1_counts(tp, fp, total_targets - tp).unwrap_or(0.0);
        if best.is_none_or(|(b, _)| f > b) {
            best = Some((f, threshold));
        }
    }
    best
}

/// Greedy conjunction of stumps: each round adds the rule that most improves
/// training F1, each feature at most once per comparator. Falls back to
/// `area > 0` (everything is target) when no rule beats that baseline.
pub fn fit_rules(train: &[(SegmentFeatures, ClassLabel)]) -> Result<RuleSet, ObiaError> {
    if train.is_empty() {
        return Err(ObiaError::EmptyTraining);
    }
    let is_t: Vec<bool> = train
        .iter()
        .map(|(_, c)| *c == ClassLabel::Target)
        .collect();
    let total_targets = is_t.iter().filter(|&&t| t).count() as u64;
    let mut active: Vec<usize> = (0..train.len()).collect();
    let mut rules: Vec<Rule> = Vec::new();
    let mut current =
        f1_counts(total_targets, train.len() as u64 - total_targets, 0).unwrap_or(0.0);
    loop {
        let mut best: Option<(f64, Rule)> = None;
        for f in Feature::ALL {
            for op in [Comparator::Lt, Comparator::Gt] {
                if rules.iter().any(|r| r.feature == f && r.op == op) {
                    continue;
                }
                let mut vals: Vec<(f64, bool)> = active
                    .iter()
                    .map(|&i| (train[i].0.get(f), is_t[i]))
                    .collect();
                if let Some((score, th)) = best_stump(&mut vals, op, total_targets) {
                    if score > current + 1e-12 && best.as_ref().is_none_or(|(b, _)| score > *b) {
                        best = Some((score, Rule::new(f, op, th)));
                    }
                }
            }
        }
        let Some((score, rule)) = best else { break };
        active.retain(|&i| rule.holds(&train[i].0));
        rules.push(rule);
        current = score;
    }
    if rules.is_empty() {
        rules.push(Rule::new(Feature::Area, Comparator::Gt, 0.0));
    }
    RuleSet::new(rules)
}

/// Fits the back-end and returns it with its training F1. KNN is scored
/// leave-one-out.
pub fn fit_classifier(
    train: &[(SegmentFeatures, ClassLabel)],
    backend: Backend,
) -> Result<(SegmentClassifier, f64), ObiaError> {
    match backend {
        Backend::Rules => {
            let rules = fit_rules(train)?;
            let f1 = training_f1(train.iter().map(|(f, c)| (rules.classify(f), *c)));
            Ok((SegmentClassifier::Rules { rules }, f1))
        }
        Backend::Knn { k } => {
            let k_fit = k.min(train.len());
            let model = KnnModel::fit(train, &Feature::SPECTRAL, k_fit)?;
            let f1 = training_f1(train.iter().enumerate().map(|(i, (f, c))| {
                (
                    model.classify_vector(&f.vector(&Feature::SPECTRAL), Some(i)),
                    *c,
                )
            }));
            Ok((SegmentClassifier::Knn { model }, f1))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComboScore {
    pub params: SegmentationParams,
    pub f1: f64,
    pub segments: usize,
    pub training_samples: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub scores: Vec<ComboScore>,
    pub best_index: usize,
    pub best_classifier: SegmentClassifier,
}

impl GridSearchOutcome {
    pub fn best(&self) -> &ComboScore {
        &self.scores[self.best_index]
    }

    /// `scale,shape,compactness,F1,seconds`, one row per combination.
    pub fn log_csv(&self) -> String {
        let mut s = String::from("scale,shape,compactness,F1,seconds\n");
        for c in &self.scores {
            s.push_str(&format!(
                "{},{},{},{:.6},{:.3}\n",
                c.params.scale, c.params.shape_weight, c.params.compactness_weight, c.f1, c.seconds
            ));
        }
        s
    }
}

struct ComboRun {
    score: ComboScore,
    classifier: Option<SegmentClassifier>,
}

fn run_combo(
    scene: &Scene,
    classes: &[Option<ClassLabel>],
    p: SegmentationParams,
    backend: Backend,
) -> Result<ComboRun, ObiaError> {
    let t0 = Instant::now();
    let sg = segment(&scene.image, &p)?;
    let feats = segment_features(&scene.image, &sg);
    let train = training_segments(&sg, &feats, classes);
    let (classifier, f1) = if train.is_empty() {
        (None, 0.0)
    } else {
        let (c, f) = fit_classifier(&train, backend)?;
        // a classifier fitted to one class scores a vacuous F1
        let both = [ClassLabel::Target, ClassLabel::Background]
            .iter()
            .all(|c| train.iter().any(|(_, t)| t == c));
        (Some(c), if both { f } else { 0.0 })
    };
    Ok(ComboRun {
        score: ComboScore {
            params: p,
            f1,
            segments: sg.len(),
            training_samples: train.len(),
            seconds: t0.elapsed().as_secs_f64(),
        },
        classifier,
    })
}

/// Scores every combination; the first combination with the highest F1
/// wins. Combinations whose training segments miss a class score F1 0. Combinations run in parallel when the `parallel` feature is on.
pub fn grid_search(
    scene: &Scene,
    train_polys: &GroundTruthSet,
    spec: &GridSpec,
    backend: Backend,
) -> Result<GridSearchOutcome, ObiaError> {
    if let Backend::Knn { k: 0 } = backend {
        return Err(ObiaError::InvalidParams("k must be at least 1".into()));
    }
    let combos = spec.combos()?;
    let classes = class_raster(scene, train_polys);
    if classes.iter().all(Option::is_none) {
        return Err(ObiaError::NoTrainingSegments);
    }
    #[cfg(feature = "parallel")]
    let runs: Vec<Result<ComboRun, ObiaError>> = {
        use rayon::prelude::*;
        combos
            .par_iter()
            .map(|&p| run_combo(scene, &classes, p, backend))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<Result<ComboRun, ObiaError>> = combos
        .iter()
        .map(|&p| run_combo(scene, &classes, p, backend))
        .collect();

    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut best: Option<usize> = None;
    for (i, r) in runs.iter().enumerate() {
        if r.classifier.is_some() && best.is_none_or(|b| r.score.f1 > runs[b].score.f1) {
            best = Some(i);
        }
    }
    let best_index = best.ok_or(ObiaError::NoTrainingSegments)?;
    let mut scores = Vec::with_capacity(runs.len());
    let mut best_classifier = None;
    for (i, r) in runs.into_iter().enumerate() {
        if i == best_index {
            best_classifier = r.classifier;
        }
        scores.push(r.score);
    }
    Ok(GridSearchOutcome {
        scores,
        best_index,
        best_classifier: best_classifier.expect("best combo has a classifier"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GeoTransform, GroundTruthPolygon, RgbImage};

    fn feats(brightness: f64, area: f64) -> SegmentFeatures {
        SegmentFeatures {
            id: 0,
            n: 1,
            mean: [brightness; 3],
            std: [0.0; 3],
            brightness,
            glcm_mean: 0.0,
            area,
        }
    }

    /// Dark squares on a light field, with one target polygon per square and
    /// one background polygon in a blank corner.
    fn toy_scene() -> (Scene, GroundTruthSet) {
        let img = RgbImage::from_fn(48, 48, |x, y| {
            let dark = (8..18).contains(&x) && (8..18).contains(&y)
                || (28..40).contains(&x) && (26..38).contains(&y);
            if dark {
                [110, 60, 40]
            } else {
                [170, 175, 160]
            }
        });
        let scene = Scene::new("toy", img, GeoTransform::north_up(0.0, 48.0, 1.0, -1.0));
        let sq = |id: &str, c: ClassLabel, x0: f64, y0: f64, x1: f64, y1: f64| {
            // map y grows upward; rows grow downward
            GroundTruthPolygon::from_open_ring(
                id,
                c,
                vec![
                    (x0, 48.0 - y0),
                    (x1, 48.0 - y0),
                    (x1, 48.0 - y1),
                    (x0, 48.0 - y1),
                ],
            )
            .unwrap()
        };
        let gts = GroundTruthSet {
            polygons: vec![
                sq("a", ClassLabel::Target, 8.0, 8.0, 18.0, 18.0),
                sq("b", ClassLabel::Target, 28.0, 26.0, 40.0, 38.0),
                sq("c", ClassLabel::Background, 0.0, 40.0, 20.0, 48.0),
            ],
        };
        (scene, gts)
    }

    #[test]
    fn axis_values() {
        let spec = GridSpec::default();
        assert_eq!(spec.scale.values().unwrap().len(), 17);
        assert_eq!(
            spec.shape.values().unwrap(),
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
        );
        assert_eq!(spec.combos().unwrap().len(), 1377);
        assert!(GridAxis::List(vec![]).values().is_err());
        assert!(GridAxis::Range {
            start: 1.0,
            stop: 0.0,
            step: 1.0
        }
        .values()
        .is_err());
    }

    #[test]
    fn stumps_separate_by_brightness() {
        let train: Vec<_> = (0..10)
            .map(|i| (feats(50.0 + i as f64, 10.0), ClassLabel::Target))
            .chain((0..10).map(|i| (feats(150.0 + i as f64, 10.0), ClassLabel::Background)))
            .collect();
        let rs = fit_rules(&train).unwrap();
        assert_eq!(rs.rules().len(), 1);
        assert_eq!(rs.rules()[0].op, Comparator::Lt);
        assert!((rs.rules()[0].threshold - 104.5).abs() < 1e-9);
        let (_, f1) = fit_classifier(&train, Backend::Rules).unwrap();
        assert_eq!(f1, 1.0);
        let (_, f1) = fit_classifier(&train, Backend::Knn { k: 1 }).unwrap();
        assert_eq!(f1, 1.0);
        // all-target training set: nothing beats the baseline
        let only: Vec<_> = train[..3].to_vec();
        assert_eq!(
            fit_rules(&only).unwrap().rules(),
            &[Rule::new(Feature::Area, Comparator::Gt, 0.0)]
        );
    }

    #[test]
    fn degenerate_grid_returns_its_point() {
        let (scene, gts) = toy_scene();
        let spec = GridSpec::single(SegmentationParams::new(110.0, 0.3, 0.8));
        let out = grid_search(&scene, &gts, &spec, Backend::Rules).unwrap();
        assert_eq!(out.scores.len(), 1);
        assert_eq!(out.best().params, SegmentationParams::new(110.0, 0.3, 0.8));
    }

    #[test]
    fn argmax_is_first_best() {
        let (scene, gts) = toy_scene();
        let spec = GridSpec {
            scale: GridAxis::List(vec![0.0, 5.0, 20.0, 60.0]),
            shape: GridAxis::List(vec![0.1, 0.5]),
            compactness: GridAxis::single(0.5),
        };
        for backend in [Backend::Rules, Backend::Knn { k: 1 }] {
            let out = grid_search(&scene, &gts, &spec, backend).unwrap();
            assert_eq!(out.scores.len(), 8);
            let max = out
                .scores
                .iter()
                .map(|s| s.f1)
                .fold(f64::NEG_INFINITY, f64::max);
            let first = out.scores.iter().position(|s| s.f1 == max).unwrap();
            assert_eq!(out.best_index, first);
            assert!(max > 0.9);
        }
    }

    #[test]
    fn no_overlap_is_an_error() {
        let (scene, _) = toy_scene();
        let far = GroundTruthSet {
            polygons: vec![GroundTruthPolygon::from_open_ring(
                "x",
                ClassLabel::Target,
                vec![(1000.0, 1000.0), (1010.0, 1000.0), (1010.0, 1010.0)],
            )
            .unwrap()],
        };
        let spec = GridSpec::single(SegmentationParams::default());
        assert!(matches!(
            grid_search(&scene, &far, &spec, Backend::Rules),
            Err(ObiaError::NoTrainingSegments)
        ));
    }
}
