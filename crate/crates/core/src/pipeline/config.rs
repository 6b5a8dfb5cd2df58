use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{
    FactorLevels, InletLaw, SyntheticFieldModel, DEFAULT_LEVELS, MULTI_FREQUENCIES, MULTI_VELOCITIES,
};
use crate::error::{Error, Result};
use crate::neural::{LstmArch, MlpArch, TrainConfig, TransformerArch};
use crate::spectral::DEFAULT_K;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FftMlp,
    AvgForecast,
    PodLstm,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::FftMlp => "fft-mlp",
            ExperimentKind::AvgForecast => "avg-forecast",
            ExperimentKind::PodLstm => "pod-lstm",
        }
    }
}

/// Optimiser settings for one network; the seed comes from the experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            max_epochs: d.max_epochs,
            patience: d.patience,
            validation_fraction: d.validation_fraction,
        }
    }
}

impl TrainingSettings {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            validation_fraction: self.validation_fraction,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSettings {
    pub hidden: Vec<usize>,
    pub training: TrainingSettings,
}

impl Default for MlpSettings {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            training: TrainingSettings {
                learning_rate: 1e-3,
                batch_size: 8,
                max_epochs: 3000,
                patience: 300,
                ..Default::default()
            },
        }
    }
}

impl MlpSettings {
    pub fn arch(&self, inputs: usize, outputs: usize) -> MlpArch {
        let mut layer_sizes = vec![inputs];
        layer_sizes.extend(&self.hidden);
        layer_sizes.push(outputs);
        MlpArch { layer_sizes }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmSettings {
    pub hidden_size: usize,
    pub training: TrainingSettings,
}

impl Default for LstmSettings {
    fn default() -> Self {
        Self {
            hidden_size: 64,
            training: TrainingSettings {
                learning_rate: 1e-3,
                max_epochs: 200,
                patience: 50,
                ..Default::default()
            },
        }
    }
}

impl LstmSettings {
    pub fn arch(&self, features: usize) -> LstmArch {
        LstmArch {
            input_size: features,
            hidden_size: self.hidden_size,
            output_size: features,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformerSettings {
    pub model_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_dim: usize,
    pub training: TrainingSettings,
}

impl Default for TransformerSettings {
    fn default() -> Self {
        Self {
            model_dim: 64,
            heads: 4,
            layers: 2,
            ff_dim: 128,
            training: TrainingSettings {
                learning_rate: 1e-3,
                max_epochs: 200,
                patience: 50,
                ..Default::default()
            },
        }
    }
}

impl TransformerSettings {
    pub fn arch(&self, features: usize) -> TransformerArch {
        TransformerArch::with_heads(features, self.model_dim, self.heads, self.layers, self.ff_dim, features)
    }
}

/// One experiment, read from a JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub field: SyntheticFieldModel,
    /// Factor levels for the Taguchi plan (fft-mlp).
    pub levels: FactorLevels,
    /// Explicit `(H/d, f, U)` cases replacing the Taguchi plan; the last four
    /// are held out.
    pub cases: Option<Vec<[f64; 3]>>,
    /// `(U_i, f_i)` inlet components (avg-forecast, pod-lstm).
    pub components: Vec<(f64, f64)>,
    /// Samples per period of the lowest inlet frequency.
    pub samples_per_cycle: usize,
    pub cycles: usize,
    pub signature_k: usize,
    pub window: usize,
    pub lstm_train_fraction: f64,
    pub transformer_train_fraction: f64,
    pub energy_threshold: f64,
    /// Pointwise relative error budget for the forecast horizon.
    pub error_budget: f64,
    pub mlp: MlpSettings,
    pub lstm: LstmSettings,
    pub transformer: TransformerSettings,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::FftMlp,
            seed: 0,
            field: SyntheticFieldModel::default(),
            levels: DEFAULT_LEVELS,
            cases: None,
            components: MULTI_VELOCITIES
                .iter()
                .copied()
                .zip(MULTI_FREQUENCIES.iter().copied())
                .collect(),
            samples_per_cycle: 128,
            cycles: 8,
            signature_k: DEFAULT_K,
            window: 20,
            lstm_train_fraction: 0.8,
            transformer_train_fraction: 0.5,
            energy_threshold: 0.99,
            error_budget: 0.05,
            mlp: MlpSettings::default(),
            lstm: LstmSettings::default(),
            transformer: TransformerSettings::default(),
            out_dir: None,
        }
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

fn in_open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        config_err(format!("{name} must lie in (0, 1), got {v}"))
    }
}

impl ExperimentConfig {
    pub fn for_kind(kind: ExperimentKind) -> Self {
        Self {
            kind,
            ..Default::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn inlet_law(&self) -> InletLaw {
        InletLaw::random_multi(self.components.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.field.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.samples_per_cycle < 2 || self.cycles == 0 {
            return config_err("samples_per_cycle must be at least 2 and cycles positive");
        }
        if self.signature_k == 0 || 2 * self.signature_k > self.samples_per_cycle {
            return config_err("signature_k must be positive and at most samples_per_cycle / 2");
        }
        if self.window < 2 {
            return config_err("window must be at least 2");
        }
        in_open_unit("lstm_train_fraction", self.lstm_train_fraction)?;
        in_open_unit("transformer_train_fraction", self.transformer_train_fraction)?;
        in_open_unit("error_budget", self.error_budget)?;
        if !(self.energy_threshold > 0.0 && self.energy_threshold <= 1.0) {
            return config_err("energy_threshold must lie in (0, 1]");
        }
        if let Some(cases) = &self.cases {
            if cases.len() <= crate::datagen::TEST_CASES {
                return config_err("an explicit case list needs more than four cases");
            }
        }
        self.inlet_law().validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.mlp.hidden.contains(&0) || self.lstm.hidden_size == 0 {
            return config_err("hidden sizes must be positive");
        }
        let t = &self.transformer;
        if t.heads == 0
            || !t.model_dim.is_multiple_of(t.heads)
            || (t.model_dim / t.heads) == 0
            || !t.model_dim.is_multiple_of(2)
        {
            return config_err("transformer model_dim must be even and divisible by heads");
        }
        if t.layers == 0 || t.ff_dim == 0 {
            return config_err("transformer layers and ff_dim must be positive");
        }
        for (name, s) in [
            ("mlp", &self.mlp.training),
            ("lstm", &self.lstm.training),
            ("transformer", &t.training),
        ] {
            s.with_seed(0)
                .validate()
                .map_err(|e| Error::Config(format!("{name}.training: {e}")))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_uses_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"kind": "pod-lstm"}"#).unwrap();
        assert_eq!(cfg, ExperimentConfig::for_kind(ExperimentKind::PodLstm));
        assert_eq!(cfg.window, 20);
        assert_eq!(cfg.energy_threshold, 0.99);
    }

    #[test]
    fn json_round_trip() {
        let cfg = ExperimentConfig {
            seed: 9,
            cycles: 3,
            ..ExperimentConfig::for_kind(ExperimentKind::AvgForecast)
        };
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        for doc in [
            r#"{"kind": "fft-mlp", "bogus": 1}"#,
            r#"{"kind": "nope"}"#,
            r#"{"window": 1}"#,
            r#"{"lstm_train_fraction": 1.0}"#,
            r#"{"energy_threshold": 0.0}"#,
            r#"{"transformer": {"model_dim": 30, "heads": 4}}"#,
            r#"{"lstm": {"training": {"validation_fraction": 0.9}}}"#,
            r#"{"components": []}"#,
            r#"{"field": {"decay_width": -1}}"#,
            "not json",
        ] {
            let err = ExperimentConfig::from_json(doc).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{doc}: {err}");
        }
    }
}
