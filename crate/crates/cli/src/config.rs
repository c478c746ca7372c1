use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use emocont_core::dsp::SPEAKER_FLAG_SUFFIX;
use emocont_core::model::{ModelConfig, TrainConfig, DEFAULT_LAYER_UNITS};
use serde::{Deserialize, Serialize};

/// Reducer width used for a feature set when the run does not set one.
pub fn default_reducer_dim(feature_set: &str) -> Option<usize> {
    match base_feature_set(feature_set) {
        "acoustic-embed" => Some(40),
        "linguistic-embed" => Some(48),
        _ => None,
    }
}

/// Feature-set name without the speaker-flag suffix.
pub fn base_feature_set(feature_set: &str) -> &str {
    feature_set.strip_suffix(SPEAKER_FLAG_SUFFIX).unwrap_or(feature_set)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    /// Replaces the feature set's default reducer width.
    pub reducer_dim: Option<usize>,
    /// Feed features straight into the first recurrent layer.
    pub disable_reducer: bool,
    pub layer_units: Option<Vec<usize>>,
    pub output_tanh: bool,
}

/// Everything one command invocation needs. Missing JSON fields take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
    pub feature_set: String,
    pub dimension: String,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: Option<usize>,
    pub min_delta: f64,
    pub grad_clip: Option<f64>,
    /// Resample audio to this rate before MFCC extraction.
    pub resample_hz: Option<u32>,
    pub model: ModelOverrides,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            manifest: None,
            out: PathBuf::from("runs"),
            feature_set: "mfcc-stats".into(),
            dimension: "satisfaction".into(),
            seed: 0,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            patience: train.patience,
            min_delta: train.min_delta,
            grad_clip: train.grad_clip,
            resample_hz: None,
            model: ModelOverrides::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn manifest_path(&self) -> Result<&Path> {
        match &self.manifest {
            Some(p) => Ok(p),
            None => bail!("no manifest given (--manifest or \"manifest\" in the config file)"),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            patience: self.patience,
            min_delta: self.min_delta,
            grad_clip: self.grad_clip,
        }
    }

    pub fn model_config(&self, input_dim: usize) -> ModelConfig {
        let reducer_dim = if self.model.disable_reducer {
            None
        } else {
            self.model.reducer_dim.or_else(|| default_reducer_dim(&self.feature_set))
        };
        ModelConfig {
            input_dim,
            reducer_dim,
            layer_units: self
                .model
                .layer_units
                .clone()
                .unwrap_or_else(|| DEFAULT_LAYER_UNITS.to_vec()),
            output_tanh: self.model.output_tanh,
            seed: self.seed,
        }
    }

    pub fn features_dir(&self) -> PathBuf {
        self.out.join("features").join(&self.feature_set)
    }

    pub fn model_dir(&self) -> PathBuf {
        self.out.join("models").join(&self.feature_set)
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.out.join("eval").join(&self.feature_set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_training_protocol() {
        let c = RunConfig::default();
        assert_eq!((c.epochs, c.batch_size, c.learning_rate), (500, 15, 0.001));
        assert_eq!(c.model_config(48).layer_units, vec![200, 64, 32, 32]);
        assert_eq!(c.model_config(48).reducer_dim, None);
    }

    #[test]
    fn reducer_defaults_by_feature_set() {
        let mut c = RunConfig {
            feature_set: "acoustic-embed".into(),
            ..RunConfig::default()
        };
        assert_eq!(c.model_config(512).reducer_dim, Some(40));
        c.feature_set = "linguistic-embed+spk".into();
        assert_eq!(c.model_config(769).reducer_dim, Some(48));
        c.model.reducer_dim = Some(16);
        assert_eq!(c.model_config(769).reducer_dim, Some(16));
        c.model.disable_reducer = true;
        assert_eq!(c.model_config(769).reducer_dim, None);
    }

    #[test]
    fn json_round_trip_and_partial_files() {
        let c = RunConfig {
            manifest: Some("m.json".into()),
            patience: Some(20),
            ..RunConfig::default()
        };
        assert_eq!(serde_json::from_str::<RunConfig>(&c.to_json()).unwrap(), c);
        let partial: RunConfig = serde_json::from_str(r#"{"epochs": 3, "model": {"layer_units": [4]}}"#).unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.batch_size, 15);
        assert!(serde_json::from_str::<RunConfig>(r#"{"epoch": 3}"#).is_err());
    }
}
