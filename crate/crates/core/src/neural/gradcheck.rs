use super::model::Model;
use super::params::zero_gradients;
use crate::error::Result;
use crate::linalg::Matrix;

/// Worst relative mismatch between analytic and central-difference
/// gradients within one parameter group.
#[derive(Clone, Debug)]
pub struct GroupCheck {
    pub name: String,
    pub max_relative_error: f64,
}

/// `|a − n| / max(|a|, |n|, 1e-6)`; the floor keeps near-zero entries from
/// dominating.
pub fn relative_gradient_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares every analytic parameter gradient against central differences.
pub fn gradient_check(model: &Model, input: &Matrix, target: &[f64], eps: f64) -> Result<Vec<GroupCheck>> {
    let mut grads = zero_gradients(model.groups());
    model.loss_gradient(input, target, &mut grads)?;
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(grads.len());
    for (gi, analytic) in grads.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (k, &a) in analytic.iter().enumerate() {
            let original = probe.groups()[gi].values[k];
            probe.groups_mut()[gi].values[k] = original + eps;
            let plus = probe.loss(input, target)?;
            probe.groups_mut()[gi].values[k] = original - eps;
            let minus = probe.loss(input, target)?;
            probe.groups_mut()[gi].values[k] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_gradient_error(a, numeric));
        }
        out.push(GroupCheck {
            name: model.groups()[gi].name.clone(),
            max_relative_error: worst,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::lstm::LstmArch;
    use crate::neural::mlp::MlpArch;
    use crate::neural::model::Architecture;
    use crate::neural::transformer::TransformerArch;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-5;
    const TOL: f64 = 1e-4;

    fn check(arch: Architecture, rows: usize, cols: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Model::new(arch, &mut rng).unwrap();
        // Move off the zero-initialised biases and unit gains.
        for g in model.groups_mut() {
            g.values.iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
        }
        let x = Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y: Vec<f64> = (0..model.output_size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let report = gradient_check(&model, &x, &y, EPS).unwrap();
        assert_eq!(report.len(), model.groups().len());
        for g in report {
            assert!(
                g.max_relative_error < TOL,
                "{} group {}: {}",
                model.kind(),
                g.name,
                g.max_relative_error
            );
        }
    }

    #[test]
    fn mlp_gradients() {
        for seed in 0..3 {
            check(
                Architecture::Mlp(MlpArch {
                    layer_sizes: vec![4, 6, 5, 3],
                }),
                1,
                4,
                seed,
            );
        }
    }

    #[test]
    fn lstm_gradients() {
        for seed in 0..3 {
            check(
                Architecture::Lstm(LstmArch {
                    input_size: 3,
                    hidden_size: 4,
                    output_size: 2,
                }),
                5,
                3,
                seed,
            );
        }
    }

    #[test]
    fn transformer_gradients() {
        for seed in 0..3 {
            check(
                Architecture::Transformer(TransformerArch::with_heads(2, 6, 3, 2, 5, 2)),
                4,
                2,
                seed,
            );
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_gradient_error(0.0, 0.0), 0.0);
        assert!((relative_gradient_error(1e-9, 0.0) - 1e-3).abs() < 1e-15);
        assert!((relative_gradient_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
