use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Samples;
use super::model::Model;
use super::params::{zero_gradients, Adam, Gradients};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Samples per parallel work unit. Fixed so gradient sums do not depend on the
/// thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 500,
            patience: 50,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return bad("validation_fraction must lie in (0, 0.5]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub model: Model,
}

impl TrainReport {
    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch - 1]
    }

    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }

    /// `epoch,train_loss,val_loss` rows.
    pub fn write_loss_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_loss", "val_loss"])?;
        for (e, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            w.write_record([(e + 1).to_string(), t.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean per-sample MSE.
pub fn mean_loss(model: &Model, data: &Samples) -> Result<f64> {
    if data.is_empty() {
        return crate::error::shape_err("mean_loss on an empty sample set");
    }
    let mut total = 0.0;
    for (x, y) in data.inputs.iter().zip(&data.targets) {
        total += model.loss(x, y)?;
    }
    Ok(total / data.len() as f64)
}

/// Summed loss and gradient over `indices`.
fn batch_gradient(model: &Model, data: &Samples, indices: &[usize]) -> Result<(f64, Gradients)> {
    let parts: Vec<Result<(f64, Gradients)>> = indices
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = zero_gradients(model.groups());
            let mut loss = 0.0;
            for &i in chunk {
                loss += model.loss_gradient(&data.inputs[i], &data.targets[i], &mut g)?;
            }
            Ok((loss, g))
        })
        .collect();
    let mut total = zero_gradients(model.groups());
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        for (acc, gi) in total.iter_mut().zip(&g) {
            crate::linalg::axpy(1.0, gi, acc);
        }
    }
    Ok((loss, total))
}

/// Trains with the trailing `validation_fraction` of `data` held out.
pub fn train(model: Model, data: &Samples, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.len() < 2 {
        return crate::error::shape_err("training needs at least two samples");
    }
    let n_val = ((cfg.validation_fraction * data.len() as f64).ceil() as usize).clamp(1, data.len() - 1);
    let (train_set, val_set) = data.split_tail(n_val);
    train_with_validation(model, &train_set, &val_set, cfg)
}

/// Mini-batch Adam on MSE with patience-based early stopping.
pub fn train_with_validation(
    mut model: Model,
    train_set: &Samples,
    val_set: &Samples,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return crate::error::shape_err("training and validation sets must be non-empty");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.groups(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report_train = Vec::new();
    let mut report_val = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.clone());
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, mut grads) = batch_gradient(&model, train_set, batch)?;
            if !loss.is_finite() {
                return Err(Error::Training { epoch });
            }
            epoch_loss += loss;
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().flatten().for_each(|g| *g *= inv);
            adam.step(model.groups_mut(), &grads);
        }
        let val = mean_loss(&model, val_set)?;
        let train_mean = epoch_loss / train_set.len() as f64;
        if !val.is_finite() || !train_mean.is_finite() {
            return Err(Error::Training { epoch });
        }
        report_train.push(train_mean);
        report_val.push(val);
        if val < best.0 {
            best = (val, epoch, model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainReport {
        train_loss: report_train,
        val_loss: report_val,
        best_epoch: best.1,
        stopped_early,
        model: best.2,
    })
}

/// Autoregressive forecast: each prediction becomes the newest window row.
///
/// The model output must have as many entries as the window has columns.
pub fn forecast_rollout(model: &Model, seed_window: &Matrix, horizon: usize) -> Result<Matrix> {
    if horizon == 0 {
        return crate::error::domain_err("horizon must be at least 1");
    }
    let (w, f) = seed_window.shape();
    if w == 0 || model.output_size() != f {
        return crate::error::shape_err(format!(
            "rollout needs a non-empty window with {} columns, got {:?}",
            model.output_size(),
            seed_window.shape()
        ));
    }
    let mut window = seed_window.as_slice().to_vec();
    let mut out = Vec::with_capacity(horizon * f);
    for _ in 0..horizon {
        let pred = model.predict(&Matrix::new(w, f, window.clone())?)?;
        window.drain(..f);
        window.extend_from_slice(&pred);
        out.extend(pred);
    }
    Matrix::new(horizon, f, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::dataset::WindowedDataset;
    use crate::neural::lstm::LstmArch;
    use crate::neural::mlp::MlpArch;
    use crate::neural::model::Architecture;

    fn linear_data() -> Samples {
        let xs: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 99.0]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![2.0 * x[0] + 1.0]).collect();
        Samples::from_vectors(&xs, &ys).unwrap()
    }

    fn mlp(seed: u64) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Model::new(
            Architecture::Mlp(MlpArch {
                layer_sizes: vec![1, 16, 1],
            }),
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn mlp_learns_a_line() {
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            max_epochs: 2000,
            patience: 200,
            seed: 3,
            ..Default::default()
        };
        let report = train(mlp(1), &linear_data(), &cfg).unwrap();
        assert!(report.best_val_loss() < 1e-4, "val mse {}", report.best_val_loss());
        assert!(report.epochs_run() <= 2000);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let cfg = TrainConfig {
            max_epochs: 30,
            seed: 11,
            batch_size: 7,
            ..Default::default()
        };
        let a = train(mlp(5), &linear_data(), &cfg).unwrap();
        let b = train(mlp(5), &linear_data(), &cfg).unwrap();
        assert_eq!(a.train_loss, b.train_loss);
        assert_eq!(a.val_loss, b.val_loss);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn best_epoch_has_minimal_validation_loss() {
        let cfg = TrainConfig {
            learning_rate: 5e-2,
            max_epochs: 300,
            patience: 20,
            seed: 2,
            ..Default::default()
        };
        let report = train(mlp(9), &linear_data(), &cfg).unwrap();
        let min = report.val_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(report.best_val_loss(), min);
        let (_, val) = linear_data().split_tail(20);
        assert_eq!(mean_loss(&report.model, &val).unwrap(), min);
        if report.stopped_early {
            assert_eq!(report.epochs_run(), report.best_epoch + cfg.patience);
        }
    }

    #[test]
    fn divergence_reports_epoch() {
        let mut data = linear_data();
        data.targets[3] = vec![1e300];
        let cfg = TrainConfig {
            max_epochs: 5,
            ..Default::default()
        };
        match train(mlp(1), &data, &cfg) {
            Err(Error::Training { epoch }) => assert_eq!(epoch, 1),
            other => panic!("expected training error, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for cfg in [
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                validation_fraction: 0.6,
                ..Default::default()
            },
            TrainConfig {
                validation_fraction: 0.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
    }

    fn sine_series(n: usize) -> Matrix {
        let v = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 20.0).sin())
            .collect();
        Matrix::new(n, 1, v).unwrap()
    }

    #[test]
    fn lstm_forecasts_a_sine() {
        let series = sine_series(200);
        let ds = WindowedDataset::new(&series, 20, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let arch = Architecture::Lstm(LstmArch {
            input_size: 1,
            hidden_size: 16,
            output_size: 1,
        });
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 16,
            max_epochs: 150,
            patience: 30,
            seed: 1,
            ..Default::default()
        };
        let report = train(Model::new(arch, &mut rng).unwrap(), &ds.train(), &cfg).unwrap();
        let test_mse = mean_loss(&report.model, &ds.test()).unwrap();
        assert!(test_mse < 1e-3, "test mse {test_mse}");

        let start = ds.split;
        let horizon = 20;
        let rollout = forecast_rollout(&report.model, &ds.inputs[start], horizon).unwrap();
        let truth: Vec<f64> = (0..horizon).map(|h| series.get(start + 20 + h, 0)).collect();
        let err = crate::linalg::relative_l2(&truth, rollout.as_slice()).unwrap();
        assert!(err < 0.1, "rollout relative error {err}");

        let single = report.model.predict(&ds.inputs[start]).unwrap();
        let one = forecast_rollout(&report.model, &ds.inputs[start], 1).unwrap();
        assert_eq!(one.as_slice(), single.as_slice());
    }

    #[test]
    fn constant_model_rolls_out_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = Model::new(
            Architecture::Lstm(LstmArch {
                input_size: 1,
                hidden_size: 3,
                output_size: 1,
            }),
            &mut rng,
        )
        .unwrap();
        for g in model.groups_mut() {
            g.values.iter_mut().for_each(|v| *v = 0.0);
        }
        model.groups_mut().last_mut().unwrap().values[0] = 0.7;
        let out = forecast_rollout(&model, &Matrix::new(4, 1, vec![0.7; 4]).unwrap(), 10).unwrap();
        assert!(out.as_slice().iter().all(|v| *v == 0.7));
        assert!(forecast_rollout(&model, &Matrix::zeros(4, 2), 3).is_err());
        assert!(forecast_rollout(&model, &Matrix::zeros(4, 1), 0).is_err());
    }
}
