use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::features::{Feature, SegmentFeatures};
use super::ObiaError;
use crate::raster::ClassLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
}

impl Comparator {
    #[inline]
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Lt => value < threshold,
            Comparator::Gt => value > threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub feature: Feature,
    pub op: Comparator,
    pub threshold: f64,
}

impl Rule {
    pub fn new(feature: Feature, op: Comparator, threshold: f64) -> Self {
        Self {
            feature,
            op,
            threshold,
        }
    }

    pub fn holds(&self, f: &SegmentFeatures) -> bool {
        self.op.holds(f.get(self.feature), self.threshold)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}",
            self.feature,
            self.op.symbol(),
            self.threshold
        )
    }
}

impl FromStr for Rule {
    type Err = ObiaError;
    /// Parses `feature < value` or `feature > value`.
    fn from_str(s: &str) -> Result<Self, ObiaError> {
        let (pos, op) = s
            .find('<')
            .map(|p| (p, Comparator::Lt))
            .or_else(|| s.find('>').map(|p| (p, Comparator::Gt)))
            .ok_or_else(|| ObiaError::InvalidRule(format!("no comparator in {s:?}")))?;
        let feature: Feature = s[..pos].parse()?;
        let threshold: f64 = s[pos + 1..]
            .trim()
            .parse()
            .map_err(|_| ObiaError::InvalidRule(format!("bad threshold in {s:?}")))?;
        Ok(Rule::new(feature, op, threshold))
    }
}

/// Conjunction of strict threshold rules; never empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

impl<'de> Deserialize<'de> for RuleSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rules = Vec::<Rule>::deserialize(d)?;
        RuleSet::new(rules).map_err(serde::de::Error::custom)
    }
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Result<Self, ObiaError> {
        if rules.is_empty() {
            return Err(ObiaError::InvalidRule("rule set must not be empty".into()));
        }
        if let Some(r) = rules.iter().find(|r| !r.threshold.is_finite()) {
            return Err(ObiaError::InvalidRule(format!(
                "non-finite threshold in {r}"
            )));
        }
        Ok(Self { rules })
    }

    /// The published best configuration: dark, reddish, low-texture segments.
    pub fn reference() -> Self {
        use Comparator::*;
        Self {
            rules: vec![
                Rule::new(Feature::Brightness, Lt, 80.87),
                Rule::new(Feature::MeanR, Gt, 97.35),
                Rule::new(Feature::MeanG, Lt, 81.18),
                Rule::new(Feature::MeanB, Lt, 64.96),
                Rule::new(Feature::GlcmMean, Lt, 80.54),
            ],
        }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// One rule per line.
    pub fn parse(text: &str) -> Result<Self, ObiaError> {
        let rules = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::parse)
            .collect::<Result<Vec<Rule>, _>>()?;
        Self::new(rules)
    }

    pub fn classify(&self, f: &SegmentFeatures) -> ClassLabel {
        if self.rules.iter().all(|r| r.holds(f)) {
            ClassLabel::Target
        } else {
            ClassLabel::Background
        }
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

pub fn rule_classify(f: &SegmentFeatures, rules: &RuleSet) -> ClassLabel {
    rules.classify(f)
}

/// Nearest-neighbour vote on z-scored features (training statistics; a zero
/// spread is treated as 1). Vote ties go to the target class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnnModel {
    pub features: Vec<Feature>,
    pub k: usize,
    mean: Vec<f64>,
    std: Vec<f64>,
    points: Vec<(Vec<f64>, ClassLabel)>,
}

impl KnnModel {
    pub fn fit(
        train: &[(SegmentFeatures, ClassLabel)],
        features: &[Feature],
        k: usize,
    ) -> Result<Self, ObiaError> {
        let raw: Vec<(Vec<f64>, ClassLabel)> = train
            .iter()
            .map(|(f, c)| (f.vector(features), *c))
            .collect();
        Self::fit_vectors(raw, features.to_vec(), k)
    }

    pub fn fit_vectors(
        raw: Vec<(Vec<f64>, ClassLabel)>,
        features: Vec<Feature>,
        k: usize,
    ) -> Result<Self, ObiaError> {
        if raw.is_empty() {
            return Err(ObiaError::EmptyTraining);
        }
        if k == 0 || k > raw.len() {
            return Err(ObiaError::InvalidParams(format!(
                "k must lie in [1, {}], got {k}",
                raw.len()
            )));
        }
        let dim = raw[0].0.len();
        let n = raw.len() as f64;
        let mean: Vec<f64> = (0..dim)
            .map(|i| raw.iter().map(|(v, _)| v[i]).sum::<f64>() / n)
            .collect();
        let var: Vec<f64> = (0..dim)
            .map(|i| {
                raw.iter()
                    .map(|(v, _)| (v[i] - mean[i]) * (v[i] - mean[i]))
                    .sum::<f64>()
                    / n
            })
            .collect();
        let std: Vec<f64> = var
            .iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        let points = raw
            .into_iter()
            .map(|(v, c)| ((0..dim).map(|i| (v[i] - mean[i]) / std[i]).collect(), c))
            .collect();
        Ok(Self {
            features,
            k,
            mean,
            std,
            points,
        })
    }

    fn standardize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(i, x)| (x - self.mean[i]) / self.std[i])
            .collect()
    }

    /// Classifies a raw feature vector, skipping training point `exclude`.
    pub fn classify_vector(&self, v: &[f64], exclude: Option<usize>) -> ClassLabel {
        let q = self.standardize(v);
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(i, (p, _))| {
                (
                    p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
                    i,
                )
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let k = self.k.min(d.len());
        let targets = d[..k]
            .iter()
            .filter(|(_, i)| self.points[*i].1 == ClassLabel::Target)
            .count();
        if 2 * targets >= k {
            ClassLabel::Target
        } else {
            ClassLabel::Background
        }
    }

    pub fn classify(&self, f: &SegmentFeatures) -> ClassLabel {
        self.classify_vector(&f.vector(&self.features), None)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn knn_classify(
    train: &[(SegmentFeatures, ClassLabel)],
    query: &SegmentFeatures,
    k: usize,
) -> Result<ClassLabel, ObiaError> {
    Ok(KnnModel::fit(train, &Feature::SPECTRAL, k)?.classify(query))
}

/// A fitted segment classifier of either kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SegmentClassifier {
    Rules { rules: RuleSet },
    Knn { model: KnnModel },
}

impl SegmentClassifier {
    pub fn classify(&self, f: &SegmentFeatures) -> ClassLabel {
        match self {
            SegmentClassifier::Rules { rules } => rules.classify(f),
            SegmentClassifier::Knn { model } => model.classify(f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn feats(brightness: f64, r: f64, g: f64, b: f64, glcm: f64) -> SegmentFeatures {
        SegmentFeatures {
            id: 0,
            n: 1,
            mean: [r, g, b],
            std: [0.0; 3],
            brightness,
            glcm_mean: glcm,
            area: 1.0,
        }
    }

    fn random_feats(rng: &mut ChaCha8Rng) -> SegmentFeatures {
        let mean = [
            rng.random_range(0.0..255.0),
            rng.random_range(0.0..255.0),
            rng.random_range(0.0..255.0),
        ];
        SegmentFeatures {
            id: 0,
            n: 10,
            mean,
            std: [
                rng.random_range(0.0..40.0),
                rng.random_range(0.0..40.0),
                rng.random_range(0.0..40.0),
            ],
            brightness: mean.iter().sum::<f64>() / 3.0,
            glcm_mean: rng.random_range(0.0..255.0),
            area: 10.0,
        }
    }

    #[test]
    fn reference_rules() {
        let rs = RuleSet::reference();
        assert_eq!(
            rs.classify(&feats(70.0, 100.0, 75.0, 60.0, 75.0)),
            ClassLabel::Target
        );
        assert_eq!(
            rs.classify(&feats(90.0, 100.0, 75.0, 60.0, 75.0)),
            ClassLabel::Background
        );
        assert!(RuleSet::new(vec![]).is_err());
        assert_eq!(RuleSet::parse(&rs.to_string()).unwrap(), rs);
        assert!(RuleSet::parse("ndvi > 3").is_err());
        assert!(RuleSet::parse("brightness = 3").is_err());
    }

    #[test]
    fn knn_examples() {
        let train = vec![
            (feats(10.0, 10.0, 10.0, 10.0, 10.0), ClassLabel::Target),
            (
                feats(200.0, 200.0, 200.0, 200.0, 200.0),
                ClassLabel::Background,
            ),
            (feats(20.0, 30.0, 10.0, 20.0, 5.0), ClassLabel::Target),
            (feats(30.0, 30.0, 30.0, 40.0, 20.0), ClassLabel::Target),
        ];
        assert_eq!(
            knn_classify(&train, &train[1].0, 1).unwrap(),
            ClassLabel::Background
        );
        assert_eq!(
            knn_classify(&train, &train[1].0, 4).unwrap(),
            ClassLabel::Target
        );
        assert!(knn_classify(&[], &train[0].0, 1).is_err());
        assert!(knn_classify(&train, &train[0].0, 5).is_err());
        // 1-1 vote tie goes to target
        let two = vec![train[0].clone(), train[1].clone()];
        assert_eq!(
            knn_classify(&two, &train[1].0, 2).unwrap(),
            ClassLabel::Target
        );
    }

    proptest! {
        #[test]
        fn knn_matches_brute_force(seed in 0u64..5000, n in 1usize..=50, k_raw in 1usize..=50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let train: Vec<(SegmentFeatures, ClassLabel)> = (0..n)
                .map(|_| (random_feats(&mut rng), if rng.random_bool(0.5) { ClassLabel::Target } else { ClassLabel::Background }))
                .collect();
            let q = random_feats(&mut rng);
            let k = 1 + (k_raw - 1) % n;

            // brute force: standardize with training stats, sort all pairs, vote
            let fs = Feature::SPECTRAL;
            let cols: Vec<Vec<f64>> = fs.iter().map(|&f| train.iter().map(|(t, _)| t.get(f)).collect()).collect();
            let stats: Vec<(f64, f64)> = cols.iter().map(|c| {
                let m = c.iter().sum::<f64>() / c.len() as f64;
                let s = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / c.len() as f64).sqrt();
                (m, if s > 1e-12 { s } else { 1.0 })
            }).collect();
            let z = |f: &SegmentFeatures| -> Vec<f64> { fs.iter().zip(&stats).map(|(&ft, (m, s))| (f.get(ft) - m) / s).collect() };
            let zq = z(&q);
            let mut all: Vec<(f64, usize)> = train.iter().enumerate().map(|(i, (t, _))| {
                (z(t).iter().zip(&zq).map(|(a, b)| (a - b) * (a - b)).sum(), i)
            }).collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let t = all[..k].iter().filter(|(_, i)| train[*i].1 == ClassLabel::Target).count();
            let expected = if t * 2 >= k { ClassLabel::Target } else { ClassLabel::Background };
            prop_assert_eq!(knn_classify(&train, &q, k).unwrap(), expected);
        }

        #[test]
        fn loosening_a_threshold_never_shrinks_targets(seed in 0u64..5000, which in 0usize..5, delta in 0.0f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let segs: Vec<SegmentFeatures> = (0..200).map(|_| random_feats(&mut rng)).collect();
            let base = RuleSet::reference();
            let mut rules = base.rules().to_vec();
            let r = &mut rules[which];
            r.threshold += if r.op == Comparator::Lt { delta } else { -delta };
            let loose = RuleSet::new(rules).unwrap();
            for s in &segs {
                if base.classify(s) == ClassLabel::Target {
                    prop_assert!(loose.classify(s) == ClassLabel::Target);
                }
            }
        }
    }
}
