//! Two-class patch classifier: a pluggable interface, a built-in logistic
//! model over hand-crafted features and an adapter for external processes.

mod external;
pub mod features;
pub mod model;

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augment::{PatchDataset, Split};
use crate::raster::{ClassLabel, Patch, RasterError};

pub use external::ExternalClassifier;
pub use features::{extract_features, feature_names, FEATURE_LEN};
pub use model::{
    apply_update, gradient, loss, sgd_step, CurvePoint, ModelState, Sample, Scaler, TrainConfig,
    TrainOutcome, UpdateRule,
};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training split must contain both classes")]
    SingleClass,
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite gradient component at index {index}")]
    NonFiniteGradient { index: usize },
    #[error(
        "classifier returned non-finite or out-of-range probability {value} for patch {index}"
    )]
    BadProbability { index: usize, value: f64 },
    #[error("external classifier: {0}")]
    External(String),
    #[error("external classifier protocol violation: {0}")]
    Protocol(String),
    #[error("model file {path}: {message}")]
    ModelFile { path: PathBuf, message: String },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Probability-of-target scoring for batches of patches.
pub trait Classifier: Send + Sync {
    /// Side length the classifier expects; callers resample windows to it.
    fn patch_size(&self) -> usize;

    /// One probability in `[0, 1]` per patch, in input order.
    fn predict_proba(&self, patches: &[Patch]) -> Result<Vec<f64>, ClassifierError>;

    /// Whether batches may be scored from several threads at once.
    fn concurrent(&self) -> bool {
        true
    }
}

pub(crate) fn check_probabilities(p: &[f64]) -> Result<(), ClassifierError> {
    match p.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(ClassifierError::BadProbability {
            index,
            value: p[index],
        }),
        None => Ok(()),
    }
}

/// Logistic regression over standardized patch features.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinModel {
    pub scaler: Scaler,
    /// `FEATURE_LEN` weights followed by the bias.
    pub weights: Vec<f64>,
    pub patch_size: usize,
}

const MODEL_MAGIC: &str = "shrubmap-logreg 1";

pub fn schema_hash() -> String {
    let digest = Sha256::digest(features::feature_schema().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl BuiltinModel {
    /// Untrained model: every patch scores 0.5.
    pub fn zeros(patch_size: usize) -> Self {
        Self {
            scaler: Scaler::identity(FEATURE_LEN),
            weights: vec![0.0; FEATURE_LEN + 1],
            patch_size,
        }
    }

    pub fn score_features(&self, f: &[f64]) -> f64 {
        let mut x = self.scaler.apply(f);
        x.push(1.0);
        model::predict(&self.weights, &x)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{MODEL_MAGIC}\nschema {}\npatch_size {}\nfeatures {}\n",
            schema_hash(),
            self.patch_size,
            FEATURE_LEN
        );
        for (name, vals) in [
            ("scaler_mean", &self.scaler.mean),
            ("scaler_std", &self.scaler.std),
            ("weights", &self.weights),
        ] {
            s.push_str(name);
            s.push('\n');
            for v in vals.iter() {
                s.push_str(&format!("{v:?}\n"));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let mut next = || {
            lines
                .next()
                .ok_or_else(|| "unexpected end of file".to_string())
        };
        if next()? != MODEL_MAGIC {
            return Err("not a model file or unsupported version".into());
        }
        let expect_kv = |line: &str, key: &str| -> Result<String, String> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| format!("expected {key:?} line, found {line:?}"))
        };
        let schema = expect_kv(next()?, "schema")?;
        if schema != schema_hash() {
            return Err("feature schema hash mismatch".into());
        }
        let patch_size: usize = expect_kv(next()?, "patch_size")?
            .parse()
            .map_err(|e| format!("patch_size: {e}"))?;
        let n: usize = expect_kv(next()?, "features")?
            .parse()
            .map_err(|e| format!("features: {e}"))?;
        if n != FEATURE_LEN {
            return Err(format!(
                "expected {FEATURE_LEN} features, file declares {n}"
            ));
        }
        let mut section = |name: &str, len: usize| -> Result<Vec<f64>, String> {
            let head = next()?;
            if head != name {
                return Err(format!("expected section {name:?}, found {head:?}"));
            }
            (0..len)
                .map(|_| {
                    let l = next()?;
                    let v: f64 = l
                        .trim()
                        .parse()
                        .map_err(|_| format!("{name}: not a number: {l:?}"))?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(format!("{name}: non-finite value"))
                    }
                })
                .collect()
        };
        let mean = section("scaler_mean", FEATURE_LEN)?;
        let std = section("scaler_std", FEATURE_LEN)?;
        let weights = section("weights", FEATURE_LEN + 1)?;
        Ok(Self {
            scaler: Scaler { mean, std },
            weights,
            patch_size,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        std::fs::write(path, self.to_text()).map_err(|e| RasterError::io(path, e).into())
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let text = std::fs::read_to_string(path).map_err(|e| RasterError::io(path, e))?;
        Self::from_text(&text).map_err(|message| ClassifierError::ModelFile {
            path: path.to_path_buf(),
            message,
        })
    }
}

fn features_of(patches: &[Patch]) -> Vec<Vec<f64>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        patches.par_iter().map(extract_features).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        patches.iter().map(extract_features).collect()
    }
}

impl Classifier for BuiltinModel {
    fn patch_size(&self) -> usize {
        self.patch_size
    }

    fn predict_proba(&self, patches: &[Patch]) -> Result<Vec<f64>, ClassifierError> {
        let p: Vec<f64> = features_of(patches)
            .iter()
            .map(|f| self.score_features(f))
            .collect();
        check_probabilities(&p)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: BuiltinModel,
    pub outcome: TrainOutcome,
}

/// Fits the scaler on the training split, then runs seeded SGD. The
/// validation split only feeds the recorded accuracy curve.
pub fn train(ds: &PatchDataset, cfg: &TrainConfig) -> Result<TrainedModel, ClassifierError> {
    cfg.validate()?;
    let patch_size = ds.samples.first().map_or(80, |s| s.patch.width());
    let train_ds = ds.split(Split::Train);
    let val_ds = ds.split(Split::Validation);
    let label = |l: ClassLabel| l.as_f64();
    let train_rows = features_of(
        &train_ds
            .samples
            .iter()
            .map(|s| s.patch.clone())
            .collect::<Vec<_>>(),
    );
    let val_rows = features_of(
        &val_ds
            .samples
            .iter()
            .map(|s| s.patch.clone())
            .collect::<Vec<_>>(),
    );
    let scaler = Scaler::fit(&train_rows);
    let to_samples = |rows: &[Vec<f64>], src: &PatchDataset| -> Vec<Sample> {
        rows.iter()
            .zip(&src.samples)
            .map(|(r, s)| Sample::new(scaler.apply(r), label(s.label)))
            .collect()
    };
    let train_s = to_samples(&train_rows, &train_ds);
    let val_s = to_samples(&val_rows, &val_ds);
    let outcome = model::train_samples(&train_s, &val_s, cfg)?;
    let model = BuiltinModel {
        scaler,
        weights: outcome.state.w.clone(),
        patch_size,
    };
    Ok(TrainedModel { model, outcome })
}

/// A concrete classifier selected at run time.
pub enum ClassifierHandle {
    Builtin(BuiltinModel),
    External(ExternalClassifier),
}

impl Classifier for ClassifierHandle {
    fn patch_size(&self) -> usize {
        match self {
            ClassifierHandle::Builtin(m) => m.patch_size(),
            ClassifierHandle::External(e) => e.patch_size(),
        }
    }

    fn predict_proba(&self, patches: &[Patch]) -> Result<Vec<f64>, ClassifierError> {
        match self {
            ClassifierHandle::Builtin(m) => m.predict_proba(patches),
            ClassifierHandle::External(e) => e.predict_proba(patches),
        }
    }

    fn concurrent(&self) -> bool {
        matches!(self, ClassifierHandle::Builtin(_))
    }
}
