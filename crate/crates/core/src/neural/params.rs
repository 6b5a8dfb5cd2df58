use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};

/// A named block of trainable values stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl ParamGroup {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How a group is filled at construction.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Init {
    /// Uniform in `±√(6/(fan_in+fan_out))`.
    Glorot {
        fan_in: usize,
        fan_out: usize,
    },
    Constant(f64),
}

pub(crate) struct GroupSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

impl GroupSpec {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, init: Init) -> Self {
        Self {
            name: name.into(),
            rows,
            cols,
            init,
        }
    }
}

pub(crate) fn initialise<R: Rng>(layout: &[GroupSpec], rng: &mut R) -> Vec<ParamGroup> {
    layout
        .iter()
        .map(|g| {
            let n = g.rows * g.cols;
            let values = match g.init {
                Init::Glorot { fan_in, fan_out } => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..n).map(|_| rng.gen_range(-limit..=limit)).collect()
                }
                Init::Constant(c) => vec![c; n],
            };
            ParamGroup {
                name: g.name.clone(),
                rows: g.rows,
                cols: g.cols,
                values,
            }
        })
        .collect()
}

/// Checks deserialised groups against the expected layout.
pub(crate) fn check_layout(layout: &[GroupSpec], groups: &[ParamGroup]) -> Result<()> {
    if layout.len() != groups.len() {
        return shape_err(format!(
            "expected {} parameter groups, got {}",
            layout.len(),
            groups.len()
        ));
    }
    for (spec, g) in layout.iter().zip(groups) {
        if spec.name != g.name || spec.rows != g.rows || spec.cols != g.cols || g.values.len() != g.rows * g.cols {
            return shape_err(format!(
                "group '{}' ({}x{}) does not match expected '{}' ({}x{})",
                g.name, g.rows, g.cols, spec.name, spec.rows, spec.cols
            ));
        }
        if g.values.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::Domain(format!(
                "group '{}' has non-finite values",
                g.name
            )));
        }
    }
    Ok(())
}

/// Gradient buffers shaped like a parameter set.
pub type Gradients = Vec<Vec<f64>>;

pub fn zero_gradients(groups: &[ParamGroup]) -> Gradients {
    groups.iter().map(|g| vec![0.0; g.len()]).collect()
}

/// Adam with the usual defaults (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(groups: &[ParamGroup], learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: zero_gradients(groups),
            v: zero_gradients(groups),
        }
    }

    pub fn step(&mut self, groups: &mut [ParamGroup], grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (gi, group) in groups.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[gi], &mut self.v[gi], &grads[gi]);
            for k in 0..group.values.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                group.values[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

// Slice kernels shared by the dense layers. Weights are row-major `out x in`.

/// `out += W x`
#[inline]
pub(crate) fn gemv_acc(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += crate::linalg::dot(row, x);
    }
}

/// `out += Wᵀ d`
#[inline]
pub(crate) fn gemv_t_acc(w: &[f64], cols: usize, d: &[f64], out: &mut [f64]) {
    for (di, row) in d.iter().zip(w.chunks_exact(cols)) {
        if *di != 0.0 {
            crate::linalg::axpy(*di, row, out);
        }
    }
}

/// `g += d xᵀ`
#[inline]
pub(crate) fn outer_acc(g: &mut [f64], cols: usize, d: &[f64], x: &[f64]) {
    for (di, row) in d.iter().zip(g.chunks_exact_mut(cols)) {
        if *di != 0.0 {
            crate::linalg::axpy(*di, x, row);
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean squared error and its gradient with respect to the prediction.
pub(crate) fn mse_with_grad(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    (loss / n, grad)
}
