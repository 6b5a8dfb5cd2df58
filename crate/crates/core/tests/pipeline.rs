use podsurge::pipeline::stages::{evaluate, mode_sensitivity, multi_field, RunDir, REPORT_FILE};
use podsurge::pipeline::{run, ExperimentConfig, ExperimentKind};
use podsurge::pod::compute_pod;
use podsurge::spectral::{extract_signature, reconstruct_from_signature};

fn quick(kind: ExperimentKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_kind(kind);
    cfg.cycles = 4;
    cfg.mlp.training.max_epochs = 30;
    cfg.lstm.hidden_size = 8;
    cfg.lstm.training.max_epochs = 3;
    cfg.transformer.model_dim = 8;
    cfg.transformer.heads = 2;
    cfg.transformer.layers = 1;
    cfg.transformer.ff_dim = 16;
    cfg.transformer.training.max_epochs = 3;
    cfg
}

#[test]
fn linear_field_cases_are_learnable() {
    let mut cfg = ExperimentConfig::for_kind(ExperimentKind::FftMlp);
    cfg.field.velocity_exponent = 1.0;
    let dir = tempfile::tempdir().unwrap();
    let report = run(&cfg, dir.path()).unwrap();
    assert_eq!(report.cases.len(), 4);
    for c in &report.cases {
        assert!(c.relative_l2 < 0.05, "case {}: {}", c.case, c.relative_l2);
    }
}

#[test]
fn single_tone_energy_in_one_line() {
    let rate = 128.0;
    let times: Vec<f64> = (0..256).map(|j| j as f64 / rate).collect();
    let signal: Vec<f64> = times
        .iter()
        .enumerate()
        .map(|(j, t)| 3.0 * (2.0 * std::f64::consts::PI * 8.0 * t + 0.4).cos() + 0.01 * ((j * 7919 % 13) as f64 - 6.0))
        .collect();
    let sig = extract_signature(&signal, rate, 1).unwrap();
    assert_eq!(sig.entries[0].frequency, 8.0);
    let rebuilt = reconstruct_from_signature(&sig, &times);
    let total: f64 = signal.iter().map(|v| v * v).sum();
    let captured: f64 = rebuilt.iter().map(|v| v * v).sum();
    assert!(captured / total > 0.99, "{}", captured / total);
    assert!(captured <= total * (1.0 + 1e-9));
}

#[test]
fn identical_cases_give_constant_predictor() {
    let mut cfg = quick(ExperimentKind::FftMlp);
    cfg.cases = Some(vec![[4.0, 50.0, 12.0]; 25]);
    let dir = tempfile::tempdir().unwrap();
    run(&cfg, dir.path()).unwrap();
    let eval = evaluate(&cfg, &RunDir::new(dir.path())).unwrap();
    let (_, table) = eval.tables.iter().find(|(n, _)| n == "nu_curves.csv").unwrap();
    let curve = |case: &str| -> Vec<String> {
        table
            .rows
            .iter()
            .filter(|r| r[0] == case)
            .map(|r| r[3].clone())
            .collect()
    };
    let first = curve("22");
    assert!(!first.is_empty());
    for case in ["23", "24", "25"] {
        assert_eq!(curve(case), first);
    }
}

#[test]
fn constant_series_forecasts_constant() {
    let mut cfg = quick(ExperimentKind::AvgForecast);
    cfg.field.velocity_exponent = 0.0;
    let dir = tempfile::tempdir().unwrap();
    let report = run(&cfg, dir.path()).unwrap();
    assert_eq!(report.forecasts.len(), 2);
    let eval = evaluate(&cfg, &RunDir::new(dir.path())).unwrap();
    let (_, table) = eval.tables.iter().find(|(n, _)| n == "nu_forecast.csv").unwrap();
    let mut checked = 0;
    for row in table.rows.iter().filter(|r| r[0] != "truth") {
        let truth: f64 = row[2].parse().unwrap();
        let pred: f64 = row[3].parse().unwrap();
        assert!((truth - pred).abs() <= 1e-6, "{row:?}");
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn mode_sensitivity_scales_with_singular_value() {
    let cfg = ExperimentConfig::for_kind(ExperimentKind::PodLstm);
    let field = multi_field(&cfg).unwrap();
    let basis = compute_pod(&field, 0.9999).unwrap();
    assert!(basis.n_kept >= 2);
    let sens = mode_sensitivity(&basis, &field.values).unwrap();
    let norm = field.values.frobenius_norm();
    for (n, s) in sens.iter().enumerate() {
        let expected = 0.01 * basis.singular_values[n] / norm;
        assert!(
            (s - expected).abs() <= 1e-9 * expected.max(1e-300),
            "mode {n}: {s} vs {expected}"
        );
    }
    for w in sens.windows(2) {
        assert!(w[0] >= w[1]);
    }
}

#[test]
fn reports_are_reproducible() {
    let mut cfg = quick(ExperimentKind::PodLstm);
    cfg.seed = 3;
    let bytes: Vec<Vec<u8>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            run(&cfg, dir.path()).unwrap();
            std::fs::read(dir.path().join(REPORT_FILE)).unwrap()
        })
        .collect();
    assert_eq!(bytes[0], bytes[1]);
    let text = String::from_utf8(bytes[0].clone()).unwrap();
    assert!(text.contains("input_digests"));
}

#[test]
fn seed_changes_the_report() {
    let mut cfg = quick(ExperimentKind::AvgForecast);
    let a = {
        let dir = tempfile::tempdir().unwrap();
        run(&cfg, dir.path()).unwrap().to_json().unwrap()
    };
    cfg.seed = 1;
    let b = {
        let dir = tempfile::tempdir().unwrap();
        run(&cfg, dir.path()).unwrap().to_json().unwrap()
    };
    assert_ne!(a, b);
}
