use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Held-out FFT-MLP case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    /// 1-based row of the case plan.
    pub case: usize,
    pub h_over_d: f64,
    pub frequency: f64,
    pub u_jet: f64,
    pub relative_l2: f64,
    pub max_pointwise_relative_error: f64,
    pub max_error_sample: usize,
}

/// Autoregressive forecast of one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub model: String,
    pub train_fraction: f64,
    /// First forecast sample index.
    pub forecast_start: usize,
    pub forecast_steps: usize,
    pub relative_l2: f64,
    pub error_budget: f64,
    /// Leading forecast steps within the budget.
    pub horizon_steps: usize,
    /// `horizon_steps` over the full series length.
    pub horizon_fraction: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub loss_curve: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PodResult {
    pub n_kept: usize,
    pub energy_captured: f64,
    /// Relative Frobenius error of the forecast-horizon field.
    pub relative_l2: f64,
    pub max_error_percent: f64,
    pub max_error_node: usize,
    pub max_error_position: f64,
    pub stagnation_nodes: Vec<usize>,
    /// Error-map peak of the kept basis driven by the exact coefficients,
    /// i.e. truncation error alone.
    pub truncation_max_error_percent: f64,
    pub truncation_max_error_node: usize,
    /// Node with the largest time-RMS absolute error of the forecast.
    pub max_rms_error_node: usize,
    /// Relative L2 error of each forecast coefficient trajectory.
    pub mode_relative_l2: Vec<f64>,
    /// Relative field error caused by a 1% error in each mode's coefficients.
    pub mode_sensitivity: Vec<f64>,
    /// Threshold 1.0 basis with the exact horizon coefficients.
    pub lossless_relative_l2: f64,
    pub snapshot_095_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub experiment: String,
    pub seed: u64,
    /// SHA-256 of every input artifact, keyed by run-relative path.
    pub input_digests: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cases: Vec<CaseResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forecasts: Vec<ForecastResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pod: Option<PodResult>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(crate::Error::MissingArtifact(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn forecast(&self, model: &str) -> Option<&ForecastResult> {
        self.forecasts.iter().find(|f| f.model == model)
    }
}

/// A tidy CSV table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(crate::Error::MissingArtifact(path.to_path_buf()));
        }
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { header, rows })
    }
}
