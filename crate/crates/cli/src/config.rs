//! The TOML pipeline document. Every section is optional and falls back to
//! its defaults; unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shrubmap::augment::AugmentConfig;
use shrubmap::classifier::TrainConfig;
use shrubmap::detect::DetectionConfig;
use shrubmap::eval::MatchConfig;
use shrubmap::obia::{Backend, GridSpec, RuleSet, SegmentationParams};
use shrubmap::preprocess::PreprocessConfig;
use shrubmap::synth::SynthConfig;

use crate::CliError;

/// File locations. Relative paths resolve against the config file's
/// directory; unset paths default to names under `output_dir`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub output_dir: Option<PathBuf>,
    pub scene: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    /// Polygons used to label training segments.
    pub training_polygons: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    /// Argv of an external classifier process, used instead of `model`.
    pub external_classifier: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObiaClassifierChoice {
    /// Apply `rules` (the reference rule set when unset).
    #[default]
    Rules,
    /// Fit `backend` on the training polygons.
    Fit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObiaSection {
    pub params: SegmentationParams,
    pub grid: GridSpec,
    pub backend: Backend,
    pub classifier: ObiaClassifierChoice,
    pub rules: Option<RuleSet>,
}

impl Default for ObiaSection {
    fn default() -> Self {
        Self {
            params: SegmentationParams::default(),
            grid: GridSpec::default(),
            backend: Backend::Rules,
            classifier: ObiaClassifierChoice::Rules,
            rules: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
    pub detect: DetectionConfig,
    pub obia: ObiaSection,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn section<E: std::fmt::Display>(name: &str, r: Result<(), E>) -> Result<(), CliError> {
    r.map_err(|e| CliError::config(format!("config section [{name}]: {e}")))
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Checks every section, naming the first one that fails.
    pub fn validate(&self) -> Result<(), CliError> {
        section("synth", self.synth.validate())?;
        section("preprocess", self.preprocess.validate())?;
        section("augment", self.augment.validate())?;
        section("train", self.train.validate())?;
        section("detect", self.detect.validate())?;
        section("obia", self.obia.params.validate())?;
        section("obia", self.obia.grid.combos().map(|_| ()))?;
        if let Backend::Knn { k: 0 } = self.obia.backend {
            return Err(CliError::config(
                "config section [obia]: knn k must be at least 1",
            ));
        }
        section("match", self.matching.validate())?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(self.paths.output_dir.as_deref().unwrap_or(Path::new("out")))
    }

    fn path_or(&self, p: &Option<PathBuf>, default_name: &str) -> PathBuf {
        match p {
            Some(p) => self.resolve(p),
            None => self.output_dir().join(default_name),
        }
    }

    pub fn scene_path(&self) -> PathBuf {
        self.path_or(&self.paths.scene, "scene.png")
    }

    pub fn ground_truth_path(&self) -> PathBuf {
        self.path_or(&self.paths.ground_truth, "ground_truth.geojson")
    }

    /// Where `synth` writes its training sites.
    pub fn training_sites_path(&self) -> PathBuf {
        self.output_dir().join("training_sites.geojson")
    }

    /// `paths.training_polygons`, else synth training sites when present,
    /// else the ground truth.
    pub fn training_polygons_path(&self) -> PathBuf {
        match &self.paths.training_polygons {
            Some(p) => self.resolve(p),
            None if self.training_sites_path().exists() => self.training_sites_path(),
            None => self.ground_truth_path(),
        }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.path_or(&self.paths.dataset, "patches")
    }

    pub fn model_path(&self) -> PathBuf {
        self.path_or(&self.paths.model, "model.txt")
    }

    pub fn detections_path(&self) -> PathBuf {
        self.path_or(&self.paths.detections, "detections.geojson")
    }

    /// Applies `--seed` to every seeded section.
    pub fn set_seed(&mut self, seed: u64) {
        self.synth.rng_seed = seed;
        self.augment.rng_seed = seed;
        self.train.rng_seed = seed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        let c = PipelineConfig::from_toml("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn sections_parse() {
        let c = PipelineConfig::from_toml(
            r#"
            [paths]
            output_dir = "run"
            [detect]
            window_sizes = [64, 48]
            scale_fusion = "max"
            [obia]
            classifier = "fit"
            backend = { kind = "knn", k = 3 }
            rules = [{ feature = "brightness", op = "<", threshold = 80.0 }]
            [obia.params]
            scale = 90
            shape_weight = 0.2
            compactness_weight = 0.5
            [obia.grid]
            scale = [100, 110]
            shape = { start = 0.1, stop = 0.3, step = 0.1 }
            compactness = [0.8]
            [match]
            criterion = "iou"
            "#,
        )
        .unwrap();
        assert_eq!(c.detect.window_sizes, vec![64, 48]);
        assert_eq!(c.obia.backend, Backend::Knn { k: 3 });
        assert_eq!(c.obia.grid.combos().unwrap().len(), 6);
        assert_eq!(c.obia.rules.as_ref().unwrap().rules().len(), 1);
        assert_eq!(c.output_dir(), PathBuf::from("run"));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_sections() {
        assert!(PipelineConfig::from_toml("[detect]\nwindow_size = 3\n").is_err());
        assert!(PipelineConfig::from_toml("[nonsense]\n").is_err());
        let c = PipelineConfig::from_toml("[train]\nalpha = -1.0\n").unwrap();
        let e = c.validate().unwrap_err();
        assert!(e.message.contains("[train]"), "{}", e.message);
    }
}
