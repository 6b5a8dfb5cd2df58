use serde::{Deserialize, Serialize};

use crate::error::{domain_err, shape_err, Result};
use crate::linalg::Matrix;

/// Input/target pairs consumed by the trainer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Samples {
    pub inputs: Vec<Matrix>,
    pub targets: Vec<Vec<f64>>,
}

impl Samples {
    pub fn new(inputs: Vec<Matrix>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return shape_err(format!("{} inputs but {} targets", inputs.len(), targets.len()));
        }
        Ok(Self { inputs, targets })
    }

    /// One-row inputs, for feature-vector models.
    pub fn from_vectors(features: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Self> {
        let inputs = features
            .iter()
            .map(|f| Matrix::new(1, f.len(), f.clone()))
            .collect::<Result<_>>()?;
        Self::new(inputs, targets.to_vec())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Splits off the trailing `count` samples.
    pub fn split_tail(&self, count: usize) -> (Samples, Samples) {
        let cut = self.len().saturating_sub(count);
        (
            Samples {
                inputs: self.inputs[..cut].to_vec(),
                targets: self.targets[..cut].to_vec(),
            },
            Samples {
                inputs: self.inputs[cut..].to_vec(),
                targets: self.targets[cut..].to_vec(),
            },
        )
    }
}

/// Sliding windows over a `T x features` series with next-step targets.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    pub window: usize,
    pub inputs: Vec<Matrix>,
    pub targets: Vec<Vec<f64>>,
    /// Windows `0..split` are training windows.
    pub split: usize,
}

impl WindowedDataset {
    /// Window `j` covers rows `j..j+window` and targets row `j+window`.
    /// Targets in the first `round(train_fraction · T)` rows are training data.
    pub fn new(series: &Matrix, window: usize, train_fraction: f64) -> Result<Self> {
        if window == 0 {
            return domain_err("window must be positive");
        }
        if !(train_fraction > 0.0 && train_fraction <= 1.0) {
            return domain_err(format!("train fraction must lie in (0, 1], got {train_fraction}"));
        }
        let t = series.rows();
        if t <= window {
            return shape_err(format!("series of {t} rows is too short for window {window}"));
        }
        let n_train_rows = (train_fraction * t as f64).round() as usize;
        if n_train_rows <= window {
            return domain_err(format!(
                "training portion of {n_train_rows} rows leaves no window of length {window}"
            ));
        }
        let mut inputs = Vec::with_capacity(t - window);
        let mut targets = Vec::with_capacity(t - window);
        for j in 0..t - window {
            inputs.push(series.row_range(j, j + window)?);
            targets.push(series.row(j + window).to_vec());
        }
        Ok(Self {
            window,
            inputs,
            targets,
            split: n_train_rows - window,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn train(&self) -> Samples {
        Samples {
            inputs: self.inputs[..self.split].to_vec(),
            targets: self.targets[..self.split].to_vec(),
        }
    }

    pub fn test(&self) -> Samples {
        Samples {
            inputs: self.inputs[self.split..].to_vec(),
            targets: self.targets[self.split..].to_vec(),
        }
    }
}

/// Per-feature min-max scaling to `[0, 1]`.
///
/// A feature with zero range maps to 0 and inverts to its constant value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return shape_err("cannot fit a scaler on zero rows");
        };
        let mut min = first.clone();
        let mut max = first.clone();
        for r in rows {
            if r.len() != min.len() {
                return shape_err("ragged rows passed to scaler");
            }
            for (j, v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return domain_err("non-finite value passed to scaler");
                }
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        Ok(Self { min, max })
    }

    /// Fits on the rows of a `T x features` matrix.
    pub fn fit_matrix(m: &Matrix) -> Result<Self> {
        Self::fit(&(0..m.rows()).map(|i| m.row(i).to_vec()).collect::<Vec<_>>())
    }

    pub fn features(&self) -> usize {
        self.min.len()
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| {
                let range = self.max[j] - self.min[j];
                if range > 0.0 {
                    (v - self.min[j]) / range
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn inverse(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| self.min[j] + v * (self.max[j] - self.min[j]))
            .collect()
    }

    pub fn transform_matrix(&self, m: &Matrix) -> Result<Matrix> {
        self.map_rows(m, |r| self.transform(r))
    }

    pub fn inverse_matrix(&self, m: &Matrix) -> Result<Matrix> {
        self.map_rows(m, |r| self.inverse(r))
    }

    fn map_rows(&self, m: &Matrix, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Matrix> {
        if m.cols() != self.features() {
            return shape_err(format!(
                "scaler has {} features, matrix has {}",
                self.features(),
                m.cols()
            ));
        }
        let mut data = Vec::with_capacity(m.rows() * m.cols());
        for i in 0..m.rows() {
            data.extend(f(m.row(i)));
        }
        Matrix::new(m.rows(), m.cols(), data)
    }
}
