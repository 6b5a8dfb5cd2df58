//! Experiment stages. Every stage reads and writes a run directory so the CLI
//! and the in-process runners share one code path.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::metrics::{argmax, error_map, file_digest, horizon_steps, sha256_hex};
use super::report::{CaseResult, EvaluationReport, ForecastResult, PodResult, Table};
use crate::datagen::{average_nu, sample_times, synthesize_nu_field, taguchi_l25, CasePlan, CaseSpec};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_relative_error, relative_l2, Matrix};
use crate::neural::{
    forecast_rollout, train, Architecture, MinMaxScaler, Model, Samples, TrainReport, WindowedDataset,
};
use crate::pod::{compute_pod, cumulative_energy_curve, reconstruct_all, PodBasis, SnapshotMatrix};
use crate::spectral::{extract_signature, SpectralSignature};

pub const PLAN_FILE: &str = "plan.csv";
pub const SNAPSHOTS_FILE: &str = "snapshots.csv";
pub const BASIS_FILE: &str = "pod_basis.json";
pub const REPORT_FILE: &str = "report.json";
pub const PLOTS_DIR: &str = "plots";

/// Paths inside a run directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn case_file(index: usize) -> String {
        format!("cases/case_{:02}.csv", index + 1)
    }

    pub fn model_file(name: &str) -> String {
        format!("model_{name}.json")
    }

    pub fn scaler_file(name: &str) -> String {
        format!("scaler_{name}.json")
    }

    pub fn loss_file(name: &str) -> String {
        format!("loss_{name}.csv")
    }

    pub fn forecast_file(name: &str) -> String {
        format!("forecast_{name}.csv")
    }

    fn create(&self, sub: &str) -> Result<()> {
        std::fs::create_dir_all(self.root.join(sub))?;
        Ok(())
    }
}

/// Records the digest of each artifact as it is read.
#[derive(Default)]
struct Inputs {
    digests: BTreeMap<String, String>,
}

impl Inputs {
    fn track(&mut self, dir: &RunDir, rel: &str) -> Result<PathBuf> {
        let p = dir.path(rel);
        self.digests.insert(rel.to_string(), file_digest(&p)?);
        Ok(p)
    }
}

fn derive_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(tag)
}

const MLP: &str = "mlp";
const LSTM: &str = "lstm";
const TRANSFORMER: &str = "transformer";
const POD_LSTM: &str = "pod_lstm";

fn model_tag(name: &str) -> u64 {
    match name {
        MLP => 1,
        LSTM => 2,
        TRANSFORMER => 3,
        _ => 4,
    }
}

fn require_kind(cfg: &ExperimentConfig, kinds: &[ExperimentKind], stage: &str) -> Result<()> {
    if kinds.contains(&cfg.kind) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "stage '{stage}' does not apply to a {} experiment",
            cfg.kind.as_str()
        )))
    }
}

// ---------------------------------------------------------------------------
// Data generation

pub fn build_plan(cfg: &ExperimentConfig) -> Result<CasePlan> {
    let plan = match &cfg.cases {
        Some(list) => CasePlan::from_cases(
            list.iter()
                .map(|&[h_over_d, frequency, u_jet]| CaseSpec {
                    h_over_d,
                    frequency,
                    u_jet,
                })
                .collect(),
        )?,
        None => taguchi_l25(&cfg.levels)?,
    };
    for c in &plan.cases {
        c.validate().map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(plan)
}

/// Last sampled cycle of one harmonic case.
pub fn case_field(cfg: &ExperimentConfig, case: &CaseSpec) -> Result<SnapshotMatrix> {
    let times = sample_times(case.frequency, cfg.samples_per_cycle, cfg.cycles);
    let field = synthesize_nu_field(&cfg.field, &case.inlet(), &times)?;
    let n = times.len();
    field.slice_columns(n - cfg.samples_per_cycle..n)
}

/// Full random-multi field over all sampled cycles.
pub fn multi_field(cfg: &ExperimentConfig) -> Result<SnapshotMatrix> {
    let law = cfg.inlet_law();
    let times = sample_times(law.base_frequency(), cfg.samples_per_cycle, cfg.cycles);
    synthesize_nu_field(&cfg.field, &law, &times)
}

pub fn stage_plan(cfg: &ExperimentConfig, dir: &RunDir) -> Result<CasePlan> {
    dir.create("")?;
    let plan = build_plan(cfg)?;
    plan.write_csv(&dir.path(PLAN_FILE))?;
    Ok(plan)
}

/// Writes the snapshot CSVs: one per case for fft-mlp, a single field otherwise.
pub fn stage_generate(cfg: &ExperimentConfig, dir: &RunDir) -> Result<()> {
    dir.create("")?;
    match cfg.kind {
        ExperimentKind::FftMlp => {
            let plan = stage_plan(cfg, dir)?;
            dir.create("cases")?;
            plan.cases
                .par_iter()
                .enumerate()
                .map(|(i, c)| case_field(cfg, c)?.write_csv(&dir.path(&RunDir::case_file(i))))
                .collect::<Result<Vec<()>>>()?;
        }
        ExperimentKind::AvgForecast | ExperimentKind::PodLstm => {
            multi_field(cfg)?.write_csv(&dir.path(SNAPSHOTS_FILE))?;
        }
    }
    Ok(())
}

pub fn stage_pod(cfg: &ExperimentConfig, dir: &RunDir) -> Result<PodBasis> {
    require_kind(cfg, &[ExperimentKind::AvgForecast, ExperimentKind::PodLstm], "pod")?;
    let field = SnapshotMatrix::read_csv(&dir.path(SNAPSHOTS_FILE))?;
    let basis = compute_pod(&field, cfg.energy_threshold)?;
    basis.save(&dir.path(BASIS_FILE))?;
    Ok(basis)
}

// ---------------------------------------------------------------------------
// Trained-model persistence

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scalers {
    pub input: MinMaxScaler,
    pub output: MinMaxScaler,
}

/// A network with the scalers it was trained under.
#[derive(Clone, Debug)]
pub struct Trained {
    pub model: Model,
    pub scalers: Scalers,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

fn save_trained(dir: &RunDir, name: &str, model: &Model, scalers: &Scalers, report: &TrainReport) -> Result<()> {
    model.save(&dir.path(&RunDir::model_file(name)))?;
    std::fs::write(
        dir.path(&RunDir::scaler_file(name)),
        serde_json::to_string_pretty(scalers)?,
    )?;
    report.write_loss_csv(&dir.path(&RunDir::loss_file(name)))
}

fn load_trained(dir: &RunDir, name: &str, inputs: &mut Inputs) -> Result<Trained> {
    let model = Model::load(&inputs.track(dir, &RunDir::model_file(name))?)?;
    let scalers: Scalers = serde_json::from_str(&std::fs::read_to_string(
        inputs.track(dir, &RunDir::scaler_file(name))?,
    )?)?;
    let (epochs_run, best_epoch) = loss_summary(&inputs.track(dir, &RunDir::loss_file(name))?)?;
    Ok(Trained {
        model,
        scalers,
        best_epoch,
        epochs_run,
    })
}

/// Epoch count and first epoch of minimal validation loss.
fn loss_summary(path: &Path) -> Result<(usize, usize)> {
    let table = Table::read(path)?;
    let mut best = (f64::INFINITY, 0);
    for (i, row) in table.rows.iter().enumerate() {
        let v: f64 = row
            .get(2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("{}: bad row {}", path.display(), i + 1)))?;
        if v < best.0 {
            best = (v, i + 1);
        }
    }
    Ok((table.rows.len(), best.1))
}

fn new_model(cfg: &ExperimentConfig, arch: Architecture, name: &str) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, model_tag(name)));
    Model::new(arch, &mut rng)
}

// ---------------------------------------------------------------------------
// FFT-MLP

/// Average-Nu cycle of one case on its local time grid.
#[derive(Clone, Debug)]
pub struct CaseCurve {
    pub spec: CaseSpec,
    pub sample_rate: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl CaseCurve {
    pub fn from_field(cfg: &ExperimentConfig, spec: CaseSpec, field: &SnapshotMatrix) -> Result<Self> {
        if field.n_snapshots() != cfg.samples_per_cycle {
            return Err(Error::Format(format!(
                "case field has {} snapshots, expected {}",
                field.n_snapshots(),
                cfg.samples_per_cycle
            )));
        }
        let sample_rate = cfg.samples_per_cycle as f64 * spec.frequency;
        let times = (0..cfg.samples_per_cycle).map(|j| j as f64 / sample_rate).collect();
        Ok(Self {
            spec,
            sample_rate,
            times,
            values: average_nu(field),
        })
    }

    pub fn signature(&self, k: usize) -> Result<SpectralSignature> {
        extract_signature(&self.values, self.sample_rate, k)
    }
}

fn load_cases(cfg: &ExperimentConfig, dir: &RunDir, inputs: &mut Inputs) -> Result<(CasePlan, Vec<CaseCurve>)> {
    let plan = CasePlan::read_csv(&inputs.track(dir, PLAN_FILE)?)?;
    let mut curves = Vec::with_capacity(plan.cases.len());
    for (i, spec) in plan.cases.iter().enumerate() {
        let field = SnapshotMatrix::read_csv(&inputs.track(dir, &RunDir::case_file(i))?)?;
        curves.push(CaseCurve::from_field(cfg, *spec, &field)?);
    }
    Ok((plan, curves))
}

/// Lines below this fraction of the strongest amplitude are rounding noise.
const LINE_FLOOR: f64 = 1e-9;

/// Signature features with noise lines replaced by zero lines, so a signal
/// with fewer than `k` real lines gives a learnable target.
fn target_features(sig: &SpectralSignature) -> Vec<f64> {
    let peak = sig.entries.iter().map(|e| e.amplitude).fold(0.0, f64::max);
    sig.entries
        .iter()
        .flat_map(|e| {
            if e.amplitude > LINE_FLOOR * peak {
                [e.frequency, e.amplitude, e.phase]
            } else {
                [0.0; 3]
            }
        })
        .collect()
}

fn train_fft_mlp(
    cfg: &ExperimentConfig,
    plan: &CasePlan,
    curves: &[CaseCurve],
) -> Result<(Model, Scalers, TrainReport)> {
    // Cases come in design order; shuffle so the validation tail does not
    // remove a whole factor level from the fit.
    let mut order = plan.train_indices.clone();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 200)));
    let features: Vec<Vec<f64>> = order.iter().map(|&i| curves[i].spec.features().to_vec()).collect();
    let targets = order
        .iter()
        .map(|&i| Ok(target_features(&curves[i].signature(cfg.signature_k)?)))
        .collect::<Result<Vec<_>>>()?;
    let scalers = Scalers {
        input: MinMaxScaler::fit(&features)?,
        output: MinMaxScaler::fit(&targets)?,
    };
    let x: Vec<Vec<f64>> = features.iter().map(|f| scalers.input.transform(f)).collect();
    let y: Vec<Vec<f64>> = targets.iter().map(|t| scalers.output.transform(t)).collect();
    let samples = Samples::from_vectors(&x, &y)?;
    let arch = Architecture::Mlp(cfg.mlp.arch(3, 3 * cfg.signature_k));
    let model = new_model(cfg, arch, MLP)?;
    let report = train(
        model,
        &samples,
        &cfg.mlp.training.with_seed(derive_seed(cfg.seed, 100 + model_tag(MLP))),
    )?;
    let model = report.model.clone();
    Ok((model, scalers, report))
}

/// Predicted average-Nu cycle of one case.
pub fn predict_case(cfg: &ExperimentConfig, trained: &Trained, curve: &CaseCurve) -> Result<Vec<f64>> {
    let x = trained.scalers.input.transform(&curve.spec.features());
    let y = trained.model.predict(&Matrix::new(1, 3, x)?)?;
    let mut sig = SpectralSignature::from_features(&trained.scalers.output.inverse(&y), curve.sample_rate)?;
    // Signature lines sit on the analysis grid, so predictions are snapped to it.
    let resolution = curve.sample_rate / curve.values.len().next_power_of_two() as f64;
    for e in &mut sig.entries {
        e.frequency = (e.frequency / resolution).round().max(0.0) * resolution;
    }
    debug_assert_eq!(sig.k, cfg.signature_k);
    Ok(sig.reconstruct(&curve.times))
}

// ---------------------------------------------------------------------------
// Series forecasting

fn series_matrix(values: &[f64]) -> Result<Matrix> {
    Matrix::new(values.len(), 1, values.to_vec())
}

fn split_point(rows: usize, fraction: f64) -> usize {
    (fraction * rows as f64).round() as usize
}

fn train_series(
    cfg: &ExperimentConfig,
    series: &Matrix,
    fraction: f64,
    arch: Architecture,
    name: &str,
    settings: &super::config::TrainingSettings,
) -> Result<(Model, Scalers, TrainReport)> {
    let n_train = split_point(series.rows(), fraction);
    if n_train == 0 || n_train >= series.rows() {
        return Err(Error::Config(format!(
            "train fraction {fraction} leaves an empty split"
        )));
    }
    let scaler = MinMaxScaler::fit_matrix(&series.leading_rows(n_train)?)?;
    let scaled = scaler.transform_matrix(series)?;
    let ds = WindowedDataset::new(&scaled, cfg.window, fraction)?;
    let model = new_model(cfg, arch, name)?;
    let report = train(
        model,
        &ds.train(),
        &settings.with_seed(derive_seed(cfg.seed, 100 + model_tag(name))),
    )?;
    let model = report.model.clone();
    Ok((
        model,
        Scalers {
            input: scaler.clone(),
            output: scaler,
        },
        report,
    ))
}

/// Rolls the model over the samples after the training split, in original units.
pub fn forecast_series(cfg: &ExperimentConfig, trained: &Trained, series: &Matrix, fraction: f64) -> Result<Matrix> {
    let n_train = split_point(series.rows(), fraction);
    if n_train < cfg.window || n_train >= series.rows() {
        return Err(Error::Config(format!(
            "train fraction {fraction} leaves no forecast window"
        )));
    }
    let scaled = trained.scalers.input.transform_matrix(series)?;
    let seed_window = scaled.row_range(n_train - cfg.window, n_train)?;
    let out = forecast_rollout(&trained.model, &seed_window, series.rows() - n_train)?;
    trained.scalers.output.inverse_matrix(&out)
}

fn forecast_result(
    cfg: &ExperimentConfig,
    name: &str,
    trained: &Trained,
    fraction: f64,
    truth: &[f64],
    prediction: &[f64],
    series_len: usize,
) -> Result<ForecastResult> {
    let horizon = horizon_steps(truth, prediction, cfg.error_budget);
    Ok(ForecastResult {
        model: name.to_string(),
        train_fraction: fraction,
        forecast_start: split_point(series_len, fraction),
        forecast_steps: truth.len(),
        relative_l2: relative_l2(truth, prediction)?,
        error_budget: cfg.error_budget,
        horizon_steps: horizon,
        horizon_fraction: horizon as f64 / series_len as f64,
        best_epoch: trained.best_epoch,
        epochs_run: trained.epochs_run,
        loss_curve: RunDir::loss_file(name),
    })
}

fn load_average_series(dir: &RunDir, inputs: &mut Inputs) -> Result<(SnapshotMatrix, Vec<f64>)> {
    let field = SnapshotMatrix::read_csv(&inputs.track(dir, SNAPSHOTS_FILE)?)?;
    let avg = average_nu(&field);
    Ok((field, avg))
}

fn forecast_models(cfg: &ExperimentConfig) -> [(&'static str, f64); 2] {
    [
        (LSTM, cfg.lstm_train_fraction),
        (TRANSFORMER, cfg.transformer_train_fraction),
    ]
}

// ---------------------------------------------------------------------------
// POD-LSTM

fn coefficient_series(basis: &PodBasis) -> Matrix {
    basis.temporal_coefficients.transpose()
}

fn columns(m: &Matrix, start: usize, end: usize) -> Result<Matrix> {
    Ok(m.transpose().row_range(start, end)?.transpose())
}

/// Field error caused by a 1% relative error in each mode's coefficients,
/// relative to the field norm.
pub fn mode_sensitivity(basis: &PodBasis, field: &Matrix) -> Result<Vec<f64>> {
    let base = reconstruct_all(basis, &basis.temporal_coefficients)?;
    let norm = field.frobenius_norm();
    (0..basis.n_kept)
        .map(|n| {
            let mut coeffs = basis.temporal_coefficients.clone();
            for j in 0..coeffs.cols() {
                coeffs.set(n, j, coeffs.get(n, j) * 1.01);
            }
            Ok(reconstruct_all(basis, &coeffs)?.sub(&base)?.frobenius_norm() / norm)
        })
        .collect()
}

/// Threshold-1.0 basis driven by the exact coefficients of snapshots
/// `start..`; isolates the POD from the forecasting error.
pub fn lossless_error(field: &SnapshotMatrix, start: usize) -> Result<f64> {
    let full = compute_pod(field, 1.0)?;
    let n = field.n_snapshots();
    let coeffs = columns(&full.temporal_coefficients, start, n)?;
    let truth = columns(&field.values, start, n)?;
    frobenius_relative_error(&truth, &reconstruct_all(&full, &coeffs)?)
}

struct PodForecast {
    start: usize,
    truth_coeffs: Matrix,
    pred_coeffs: Matrix,
    truth_field: Matrix,
    pred_field: Matrix,
}

fn pod_forecast(
    cfg: &ExperimentConfig,
    trained: &Trained,
    basis: &PodBasis,
    field: &SnapshotMatrix,
) -> Result<PodForecast> {
    let series = coefficient_series(basis);
    let n = series.rows();
    let start = split_point(n, cfg.lstm_train_fraction);
    let pred_coeffs = forecast_series(cfg, trained, &series, cfg.lstm_train_fraction)?.transpose();
    let pred_field = reconstruct_all(basis, &pred_coeffs)?;
    Ok(PodForecast {
        start,
        truth_coeffs: columns(&basis.temporal_coefficients, start, n)?,
        pred_coeffs,
        truth_field: columns(&field.values, start, n)?,
        pred_field,
    })
}

/// Leading snapshots whose every node stays within the budget.
fn field_horizon(truth: &Matrix, pred: &Matrix, budget: f64) -> usize {
    (0..truth.cols())
        .take_while(|&j| {
            (0..truth.rows()).all(|i| (pred.get(i, j) - truth.get(i, j)).abs() <= budget * truth.get(i, j).abs())
        })
        .count()
}

// ---------------------------------------------------------------------------
// Stage entry points

/// Trains every network of the experiment and writes model, scaler and loss files.
pub fn stage_train(cfg: &ExperimentConfig, dir: &RunDir) -> Result<()> {
    let mut inputs = Inputs::default();
    match cfg.kind {
        ExperimentKind::FftMlp => {
            let (plan, curves) = load_cases(cfg, dir, &mut inputs)?;
            let (model, scalers, report) = train_fft_mlp(cfg, &plan, &curves)?;
            save_trained(dir, MLP, &model, &scalers, &report)
        }
        ExperimentKind::AvgForecast => {
            let (_, avg) = load_average_series(dir, &mut inputs)?;
            let series = series_matrix(&avg)?;
            for (name, fraction) in forecast_models(cfg) {
                let (arch, settings) = if name == LSTM {
                    (Architecture::Lstm(cfg.lstm.arch(1)), &cfg.lstm.training)
                } else {
                    (
                        Architecture::Transformer(cfg.transformer.arch(1)),
                        &cfg.transformer.training,
                    )
                };
                let (model, scalers, report) = train_series(cfg, &series, fraction, arch, name, settings)?;
                save_trained(dir, name, &model, &scalers, &report)?;
            }
            Ok(())
        }
        ExperimentKind::PodLstm => {
            let basis = PodBasis::load(&dir.path(BASIS_FILE))?;
            let series = coefficient_series(&basis);
            let arch = Architecture::Lstm(cfg.lstm.arch(basis.n_kept));
            let (model, scalers, report) = train_series(
                cfg,
                &series,
                cfg.lstm_train_fraction,
                arch,
                POD_LSTM,
                &cfg.lstm.training,
            )?;
            save_trained(dir, POD_LSTM, &model, &scalers, &report)
        }
    }
}

fn fmt(v: f64) -> String {
    v.to_string()
}

/// Writes forecast CSVs from the trained models.
pub fn stage_predict(cfg: &ExperimentConfig, dir: &RunDir) -> Result<Vec<PathBuf>> {
    let mut inputs = Inputs::default();
    let mut written = Vec::new();
    match cfg.kind {
        ExperimentKind::FftMlp => {
            let (plan, curves) = load_cases(cfg, dir, &mut inputs)?;
            let trained = load_trained(dir, MLP, &mut inputs)?;
            let mut table = Table::new(&["case", "t", "prediction"]);
            for &i in &plan.test_indices {
                for (t, p) in curves[i].times.iter().zip(predict_case(cfg, &trained, &curves[i])?) {
                    table.push(vec![(i + 1).to_string(), fmt(*t), fmt(p)]);
                }
            }
            let p = dir.path(&RunDir::forecast_file(MLP));
            table.write(&p)?;
            written.push(p);
        }
        ExperimentKind::AvgForecast => {
            let (field, avg) = load_average_series(dir, &mut inputs)?;
            let series = series_matrix(&avg)?;
            for (name, fraction) in forecast_models(cfg) {
                let trained = load_trained(dir, name, &mut inputs)?;
                let pred = forecast_series(cfg, &trained, &series, fraction)?;
                let start = split_point(series.rows(), fraction);
                let mut table = Table::new(&["t", "prediction"]);
                for (j, v) in pred.as_slice().iter().enumerate() {
                    table.push(vec![fmt(field.times[start + j]), fmt(*v)]);
                }
                let p = dir.path(&RunDir::forecast_file(name));
                table.write(&p)?;
                written.push(p);
            }
        }
        ExperimentKind::PodLstm => {
            let field = SnapshotMatrix::read_csv(&inputs.track(dir, SNAPSHOTS_FILE)?)?;
            let basis = PodBasis::load(&inputs.track(dir, BASIS_FILE)?)?;
            let trained = load_trained(dir, POD_LSTM, &mut inputs)?;
            let fc = pod_forecast(cfg, &trained, &basis, &field)?;
            let mut coeffs = Table::new(&["t", "mode", "prediction"]);
            for j in 0..fc.pred_coeffs.cols() {
                for n in 0..fc.pred_coeffs.rows() {
                    coeffs.push(vec![
                        fmt(field.times[fc.start + j]),
                        n.to_string(),
                        fmt(fc.pred_coeffs.get(n, j)),
                    ]);
                }
            }
            let p = dir.path(&RunDir::forecast_file(POD_LSTM));
            coeffs.write(&p)?;
            written.push(p);
            let times = field.times[fc.start..].to_vec();
            let pred = SnapshotMatrix::new(fc.pred_field, times, field.node_coords.clone())?;
            let p = dir.path(&RunDir::forecast_file("field"));
            pred.write_csv(&p)?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Report plus plot-ready tables keyed by file name.
pub struct Evaluation {
    pub report: EvaluationReport,
    pub tables: Vec<(String, Table)>,
}

fn loss_table(dir: &RunDir, names: &[&str]) -> Result<Table> {
    let mut out = Table::new(&["model", "epoch", "train_loss", "val_loss"]);
    for name in names {
        for row in Table::read(&dir.path(&RunDir::loss_file(name)))?.rows {
            let mut r = vec![name.to_string()];
            r.extend(row);
            out.push(r);
        }
    }
    Ok(out)
}

/// Recomputes every metric from the artifacts in `dir`.
pub fn evaluate(cfg: &ExperimentConfig, dir: &RunDir) -> Result<Evaluation> {
    let mut inputs = Inputs::default();
    inputs
        .digests
        .insert("config".to_string(), sha256_hex(cfg.to_json()?.as_bytes()));
    let mut report = EvaluationReport {
        experiment: cfg.kind.as_str().to_string(),
        seed: cfg.seed,
        input_digests: BTreeMap::new(),
        cases: Vec::new(),
        forecasts: Vec::new(),
        pod: None,
    };
    let mut tables = Vec::new();
    match cfg.kind {
        ExperimentKind::FftMlp => {
            let (plan, curves) = load_cases(cfg, dir, &mut inputs)?;
            let trained = load_trained(dir, MLP, &mut inputs)?;
            let mut nu = Table::new(&["case", "t", "truth", "prediction"]);
            for &i in &plan.test_indices {
                let curve = &curves[i];
                let pred = predict_case(cfg, &trained, curve)?;
                let pointwise: Vec<f64> = curve
                    .values
                    .iter()
                    .zip(&pred)
                    .map(|(t, p)| (p - t).abs() / t.abs())
                    .collect();
                let (max_at, max_err) = argmax(&pointwise).unwrap_or((0, 0.0));
                report.cases.push(CaseResult {
                    case: i + 1,
                    h_over_d: curve.spec.h_over_d,
                    frequency: curve.spec.frequency,
                    u_jet: curve.spec.u_jet,
                    relative_l2: relative_l2(&curve.values, &pred)?,
                    max_pointwise_relative_error: max_err,
                    max_error_sample: max_at,
                });
                for ((t, v), p) in curve.times.iter().zip(&curve.values).zip(&pred) {
                    nu.push(vec![(i + 1).to_string(), fmt(*t), fmt(*v), fmt(*p)]);
                }
            }
            tables.push(("nu_curves.csv".to_string(), nu));
            tables.push(("loss_curves.csv".to_string(), loss_table(dir, &[MLP])?));
        }
        ExperimentKind::AvgForecast => {
            let (field, avg) = load_average_series(dir, &mut inputs)?;
            let series = series_matrix(&avg)?;
            let mut nu = Table::new(&["model", "t", "truth", "prediction"]);
            for (j, v) in avg.iter().enumerate() {
                nu.push(vec!["truth".to_string(), fmt(field.times[j]), fmt(*v), String::new()]);
            }
            for (name, fraction) in forecast_models(cfg) {
                let trained = load_trained(dir, name, &mut inputs)?;
                let pred = forecast_series(cfg, &trained, &series, fraction)?;
                let start = split_point(avg.len(), fraction);
                let truth = &avg[start..];
                report.forecasts.push(forecast_result(
                    cfg,
                    name,
                    &trained,
                    fraction,
                    truth,
                    pred.as_slice(),
                    avg.len(),
                )?);
                for (j, p) in pred.as_slice().iter().enumerate() {
                    nu.push(vec![
                        name.to_string(),
                        fmt(field.times[start + j]),
                        fmt(truth[j]),
                        fmt(*p),
                    ]);
                }
            }
            tables.push(("nu_forecast.csv".to_string(), nu));
            tables.push(("loss_curves.csv".to_string(), loss_table(dir, &[LSTM, TRANSFORMER])?));
        }
        ExperimentKind::PodLstm => {
            let field = SnapshotMatrix::read_csv(&inputs.track(dir, SNAPSHOTS_FILE)?)?;
            let basis = PodBasis::load(&inputs.track(dir, BASIS_FILE)?)?;
            for rel in ["pod_basis_modes.csv", "pod_basis_coefficients.csv"] {
                inputs.track(dir, rel)?;
            }
            let trained = load_trained(dir, POD_LSTM, &mut inputs)?;
            let fc = pod_forecast(cfg, &trained, &basis, &field)?;
            let n = field.n_snapshots();
            let positions: Vec<f64> = field
                .node_coords
                .as_ref()
                .map(|c| c.iter().map(|p| p.0).collect())
                .unwrap_or_else(|| (0..field.n_nodes()).map(|i| i as f64).collect());
            let map = error_map(&fc.truth_field, &fc.pred_field)?;
            let (max_node, max_err) = argmax(&map).unwrap_or((0, 0.0));
            let projected = reconstruct_all(&basis, &fc.truth_coeffs)?;
            let (trunc_node, trunc_err) = argmax(&error_map(&fc.truth_field, &projected)?).unwrap_or((0, 0.0));
            let diff = fc.truth_field.sub(&fc.pred_field)?;
            let sq: Vec<f64> = (0..diff.rows())
                .map(|i| diff.row(i).iter().map(|v| v * v).sum::<f64>())
                .collect();
            let (rms_node, _) = argmax(&sq).unwrap_or((0, 0.0));
            let relative = frobenius_relative_error(&fc.truth_field, &fc.pred_field)?;
            let horizon = field_horizon(&fc.truth_field, &fc.pred_field, cfg.error_budget);
            let j95 = ((0.95 * (n - 1) as f64).round() as usize).max(fc.start);
            let mode_rel = (0..basis.n_kept)
                .map(|m| relative_l2(fc.truth_coeffs.row(m), fc.pred_coeffs.row(m)))
                .collect::<Result<Vec<_>>>()?;
            report.forecasts.push(ForecastResult {
                model: POD_LSTM.to_string(),
                train_fraction: cfg.lstm_train_fraction,
                forecast_start: fc.start,
                forecast_steps: n - fc.start,
                relative_l2: relative,
                error_budget: cfg.error_budget,
                horizon_steps: horizon,
                horizon_fraction: horizon as f64 / n as f64,
                best_epoch: trained.best_epoch,
                epochs_run: trained.epochs_run,
                loss_curve: RunDir::loss_file(POD_LSTM),
            });
            report.pod = Some(PodResult {
                n_kept: basis.n_kept,
                energy_captured: basis.energy_captured,
                relative_l2: relative,
                max_error_percent: max_err,
                max_error_node: max_node,
                max_error_position: positions[max_node],
                stagnation_nodes: cfg.field.stagnation_nodes(),
                truncation_max_error_percent: trunc_err,
                truncation_max_error_node: trunc_node,
                max_rms_error_node: rms_node,
                mode_relative_l2: mode_rel,
                mode_sensitivity: mode_sensitivity(&basis, &field.values)?,
                lossless_relative_l2: lossless_error(&field, fc.start)?,
                snapshot_095_index: j95,
            });

            let mut energy = Table::new(&["mode", "cumulative_energy", "kept"]);
            for (m, e) in cumulative_energy_curve(&basis).iter().enumerate() {
                energy.push(vec![(m + 1).to_string(), fmt(*e), (m < basis.n_kept).to_string()]);
            }
            let mut coeffs = Table::new(&["mode", "t", "truth", "prediction"]);
            for m in 0..basis.n_kept {
                for j in 0..n {
                    let pred = if j >= fc.start {
                        fmt(fc.pred_coeffs.get(m, j - fc.start))
                    } else {
                        String::new()
                    };
                    coeffs.push(vec![
                        m.to_string(),
                        fmt(field.times[j]),
                        fmt(basis.temporal_coefficients.get(m, j)),
                        pred,
                    ]);
                }
            }
            let mut emap = Table::new(&["node", "s", "error_percent"]);
            let mut snap = Table::new(&["node", "s", "truth", "prediction"]);
            for i in 0..field.n_nodes() {
                emap.push(vec![i.to_string(), fmt(positions[i]), fmt(map[i])]);
                snap.push(vec![
                    i.to_string(),
                    fmt(positions[i]),
                    fmt(field.values.get(i, j95)),
                    fmt(fc.pred_field.get(i, j95 - fc.start)),
                ]);
            }
            tables.push(("cumulative_energy.csv".to_string(), energy));
            tables.push(("coefficients.csv".to_string(), coeffs));
            tables.push(("error_map.csv".to_string(), emap));
            tables.push(("field_095.csv".to_string(), snap));
            tables.push(("loss_curves.csv".to_string(), loss_table(dir, &[POD_LSTM])?));
        }
    }
    report.input_digests = inputs.digests;
    Ok(Evaluation { report, tables })
}

pub fn stage_evaluate(cfg: &ExperimentConfig, dir: &RunDir) -> Result<EvaluationReport> {
    let eval = evaluate(cfg, dir)?;
    eval.report.save(&dir.path(REPORT_FILE))?;
    Ok(eval.report)
}

/// Writes the report and every plot table under `plots/`.
pub fn stage_report(cfg: &ExperimentConfig, dir: &RunDir) -> Result<Vec<PathBuf>> {
    let eval = evaluate(cfg, dir)?;
    eval.report.save(&dir.path(REPORT_FILE))?;
    dir.create(PLOTS_DIR)?;
    let mut written = Vec::new();
    for (name, table) in &eval.tables {
        let p = dir.path(&format!("{PLOTS_DIR}/{name}"));
        table.write(&p)?;
        written.push(p);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// End-to-end runners

pub fn run_fft_mlp(cfg: &ExperimentConfig, out: &Path) -> Result<EvaluationReport> {
    require_kind(cfg, &[ExperimentKind::FftMlp], "run_fft_mlp")?;
    run(cfg, out)
}

pub fn run_avg_forecast(cfg: &ExperimentConfig, out: &Path) -> Result<EvaluationReport> {
    require_kind(cfg, &[ExperimentKind::AvgForecast], "run_avg_forecast")?;
    run(cfg, out)
}

pub fn run_pod_lstm(cfg: &ExperimentConfig, out: &Path) -> Result<EvaluationReport> {
    require_kind(cfg, &[ExperimentKind::PodLstm], "run_pod_lstm")?;
    run(cfg, out)
}

/// Generates, trains and evaluates, leaving every artifact in `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<EvaluationReport> {
    cfg.validate()?;
    let dir = RunDir::new(out);
    stage_generate(cfg, &dir)?;
    if cfg.kind == ExperimentKind::PodLstm {
        stage_pod(cfg, &dir)?;
    }
    stage_train(cfg, &dir)?;
    stage_evaluate(cfg, &dir)
}
