//! Encoder-only Transformer for sequence-to-one regression.
//!
//! Input rows are embedded linearly, sinusoidal position codes are added, and
//! each block applies
//!
//! ```text
//! H0 = LayerNorm(SelfAttn(X) + X)
//! H  = LayerNorm(FFN(H0) + H0)
//! ```
//!
//! The prediction is a linear readout of the final position. Weight matrices
//! here act on row vectors (`X · W`), so they are stored `in x out`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{check_layout, initialise, mse_with_grad, Gradients, GroupSpec, Init, ParamGroup};
use crate::error::{shape_err, Result};
use crate::linalg::{axpy, dot, Matrix};

/// Variance floor inside LayerNorm.
pub const LAYER_NORM_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerArch {
    pub input_size: usize,
    pub model_dim: usize,
    pub key_dim: usize,
    pub value_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_dim: usize,
    pub output_size: usize,
}

impl TransformerArch {
    /// `D_k = D_v = D / H`.
    pub fn with_heads(
        input_size: usize,
        model_dim: usize,
        heads: usize,
        layers: usize,
        ff_dim: usize,
        output_size: usize,
    ) -> Self {
        let head_dim = model_dim / heads.max(1);
        Self {
            input_size,
            model_dim,
            key_dim: head_dim,
            value_dim: head_dim,
            heads,
            layers,
            ff_dim,
            output_size,
        }
    }
}

fn check_arch(a: &TransformerArch) -> Result<()> {
    let sizes = [
        a.input_size,
        a.model_dim,
        a.key_dim,
        a.value_dim,
        a.heads,
        a.layers,
        a.ff_dim,
        a.output_size,
    ];
    if sizes.contains(&0) {
        return shape_err(format!("invalid Transformer sizes {a:?}"));
    }
    if a.heads * a.value_dim != a.model_dim {
        return shape_err(format!(
            "heads x value_dim = {} must equal model_dim = {}",
            a.heads * a.value_dim,
            a.model_dim
        ));
    }
    if !a.model_dim.is_multiple_of(2) {
        return shape_err("model_dim must be even for the positional encoding");
    }
    Ok(())
}

const EMB_W: usize = 0;
const EMB_B: usize = 1;
const PER_LAYER: usize = 13;
const GLOBAL_HEAD: usize = 2;

// Offsets within a layer.
const WQ: usize = 0;
const WK: usize = 1;
const WV: usize = 2;
const WO: usize = 3;
const BO: usize = 4;
const LN1_G: usize = 5;
const LN1_B: usize = 6;
const FF1_W: usize = 7;
const FF1_B: usize = 8;
const FF2_W: usize = 9;
const FF2_B: usize = 10;
const LN2_G: usize = 11;
const LN2_B: usize = 12;

fn layout(a: &TransformerArch) -> Vec<GroupSpec> {
    let d = a.model_dim;
    let hk = a.heads * a.key_dim;
    let hv = a.heads * a.value_dim;
    let glorot = |i, o| Init::Glorot { fan_in: i, fan_out: o };
    let mut out = vec![
        GroupSpec::new("embed_w", a.input_size, d, glorot(a.input_size, d)),
        GroupSpec::new("embed_b", 1, d, Init::Constant(0.0)),
    ];
    for l in 0..a.layers {
        let name = |s: &str| format!("layer{l}.{s}");
        out.extend([
            GroupSpec::new(name("w_q"), d, hk, glorot(d, hk)),
            GroupSpec::new(name("w_k"), d, hk, glorot(d, hk)),
            GroupSpec::new(name("w_v"), d, hv, glorot(d, hv)),
            GroupSpec::new(name("w_o"), hv, d, glorot(hv, d)),
            GroupSpec::new(name("b_o"), 1, d, Init::Constant(0.0)),
            GroupSpec::new(name("ln1_gain"), 1, d, Init::Constant(1.0)),
            GroupSpec::new(name("ln1_shift"), 1, d, Init::Constant(0.0)),
            GroupSpec::new(name("ff1_w"), d, a.ff_dim, glorot(d, a.ff_dim)),
            GroupSpec::new(name("ff1_b"), 1, a.ff_dim, Init::Constant(0.0)),
            GroupSpec::new(name("ff2_w"), a.ff_dim, d, glorot(a.ff_dim, d)),
            GroupSpec::new(name("ff2_b"), 1, d, Init::Constant(0.0)),
            GroupSpec::new(name("ln2_gain"), 1, d, Init::Constant(1.0)),
            GroupSpec::new(name("ln2_shift"), 1, d, Init::Constant(0.0)),
        ]);
    }
    out.push(GroupSpec::new("readout_w", d, a.output_size, glorot(d, a.output_size)));
    out.push(GroupSpec::new("readout_b", 1, a.output_size, Init::Constant(0.0)));
    out
}

/// `PE(t)_i = sin(ω_i t)` for even `i`, `cos(ω_i t)` for odd `i`, with
/// `ω_i = 10000^(−2⌊i/2⌋/dim)`.
pub fn positional_encoding(t: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return shape_err(format!("positional encoding dimension must be even, got {dim}"));
    }
    Ok((0..dim)
        .map(|i| {
            let omega = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let arg = omega * t as f64;
            if i % 2 == 0 {
                arg.sin()
            } else {
                arg.cos()
            }
        })
        .collect())
}

/// Row-wise softmax of `q kᵀ / √d_k`.
pub fn attention_weights(q: &Matrix, k: &Matrix, d_k: usize) -> Result<Matrix> {
    if q.cols() != d_k || k.cols() != d_k {
        return shape_err(format!(
            "attention: q {:?} and k {:?} must both have d_k = {d_k} columns",
            q.shape(),
            k.shape()
        ));
    }
    let mut s = q.matmul_t(k)?.scale(1.0 / (d_k as f64).sqrt());
    for i in 0..s.rows() {
        softmax_in_place(s.row_mut(i));
    }
    Ok(s)
}

/// Scaled dot-product attention `softmax(q kᵀ / √d_k) v`.
pub fn attention(q: &Matrix, k: &Matrix, v: &Matrix, d_k: usize) -> Result<Matrix> {
    if k.rows() != v.rows() {
        return shape_err(format!("attention: {} keys but {} values", k.rows(), v.rows()));
    }
    attention_weights(q, k, d_k)?.matmul(v)
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Row-wise LayerNorm; returns the output and the normalised rows.
pub fn layer_norm(x: &Matrix, gain: &[f64], shift: &[f64]) -> Result<(Matrix, Matrix)> {
    if gain.len() != x.cols() || shift.len() != x.cols() {
        return shape_err("layer_norm gain/shift length mismatch");
    }
    let (out, cache) = layer_norm_cached(x, gain, shift);
    Ok((out, cache.xhat))
}

struct NormCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

fn layer_norm_cached(x: &Matrix, gain: &[f64], shift: &[f64]) -> (Matrix, NormCache) {
    let d = x.cols() as f64;
    let mut xhat = x.clone();
    let mut out = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(inv);
        let xh = xhat.row_mut(i);
        for v in xh.iter_mut() {
            *v = (*v - mean) * inv;
        }
        let o = out.row_mut(i);
        for j in 0..o.len() {
            o[j] = gain[j] * xh[j] + shift[j];
        }
    }
    (out, NormCache { xhat, inv_std })
}

/// Backward through LayerNorm; accumulates gain/shift gradients.
fn layer_norm_backward(
    d_out: &Matrix,
    cache: &NormCache,
    gain: &[f64],
    d_gain: &mut [f64],
    d_shift: &mut [f64],
) -> Matrix {
    let d = d_out.cols() as f64;
    let mut dx = Matrix::zeros(d_out.rows(), d_out.cols());
    for i in 0..d_out.rows() {
        let go = d_out.row(i);
        let xh = cache.xhat.row(i);
        let mut dxhat = vec![0.0; go.len()];
        for j in 0..go.len() {
            d_gain[j] += go[j] * xh[j];
            d_shift[j] += go[j];
            dxhat[j] = go[j] * gain[j];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d;
        let mean_dx = dot(&dxhat, xh) / d;
        let inv = cache.inv_std[i];
        let row = dx.row_mut(i);
        for j in 0..row.len() {
            row[j] = inv * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

fn columns(m: &Matrix, start: usize, width: usize) -> Matrix {
    let mut data = Vec::with_capacity(m.rows() * width);
    for i in 0..m.rows() {
        data.extend_from_slice(&m.row(i)[start..start + width]);
    }
    Matrix::from_vec_unchecked(m.rows(), width, data)
}

fn put_columns(dst: &mut Matrix, start: usize, src: &Matrix) {
    for i in 0..src.rows() {
        dst.row_mut(i)[start..start + src.cols()].copy_from_slice(src.row(i));
    }
}

fn add_row_bias(m: &mut Matrix, bias: &[f64]) {
    for i in 0..m.rows() {
        axpy(1.0, bias, m.row_mut(i));
    }
}

fn column_sums_into(m: &Matrix, out: &mut [f64]) {
    for i in 0..m.rows() {
        axpy(1.0, m.row(i), out);
    }
}

fn add_into(dst: &mut [f64], m: &Matrix) {
    axpy(1.0, m.as_slice(), dst);
}

fn as_matrix(g: &ParamGroup) -> Matrix {
    Matrix::from_vec_unchecked(g.rows, g.cols, g.values.clone())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transformer {
    arch: TransformerArch,
    groups: Vec<ParamGroup>,
}

struct LayerCache {
    input: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    weights: Vec<Matrix>,
    concat: Matrix,
    norm1: NormCache,
    h0: Matrix,
    ff_pre: Matrix,
    ff_act: Matrix,
    norm2: NormCache,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    output_rows: Matrix,
}

impl Transformer {
    pub fn new<R: Rng>(arch: TransformerArch, rng: &mut R) -> Result<Self> {
        check_arch(&arch)?;
        let groups = initialise(&layout(&arch), rng);
        Ok(Self { arch, groups })
    }

    pub fn from_parts(arch: TransformerArch, groups: Vec<ParamGroup>) -> Result<Self> {
        check_arch(&arch)?;
        check_layout(&layout(&arch), &groups)?;
        Ok(Self { arch, groups })
    }

    pub fn arch(&self) -> &TransformerArch {
        &self.arch
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [ParamGroup] {
        &mut self.groups
    }

    pub fn group_mut(&mut self, name: &str) -> Option<&mut ParamGroup> {
        self.groups.iter_mut().find(|g| g.name == name)
    }

    fn gi(layer: usize, offset: usize) -> usize {
        GLOBAL_HEAD + layer * PER_LAYER + offset
    }

    fn readout_w(&self) -> usize {
        GLOBAL_HEAD + self.arch.layers * PER_LAYER
    }

    fn embed(&self, seq: &Matrix) -> Result<Matrix> {
        if seq.cols() != self.arch.input_size || seq.rows() == 0 {
            return shape_err(format!(
                "Transformer expects a non-empty T x {} sequence, got {:?}",
                self.arch.input_size,
                seq.shape()
            ));
        }
        let mut x = seq.matmul(&as_matrix(&self.groups[EMB_W]))?;
        add_row_bias(&mut x, &self.groups[EMB_B].values);
        for t in 0..x.rows() {
            let pe = positional_encoding(t, self.arch.model_dim)?;
            axpy(1.0, &pe, x.row_mut(t));
        }
        Ok(x)
    }

    fn run(&self, seq: &Matrix) -> Result<ForwardCache> {
        let a = &self.arch;
        let mut x = self.embed(seq)?;
        let mut layers = Vec::with_capacity(a.layers);
        for l in 0..a.layers {
            let g = |o: usize| &self.groups[Self::gi(l, o)];
            let q = x.matmul(&as_matrix(g(WQ)))?;
            let k = x.matmul(&as_matrix(g(WK)))?;
            let v = x.matmul(&as_matrix(g(WV)))?;
            let mut concat = Matrix::zeros(x.rows(), a.heads * a.value_dim);
            let mut weights = Vec::with_capacity(a.heads);
            for h in 0..a.heads {
                let qh = columns(&q, h * a.key_dim, a.key_dim);
                let kh = columns(&k, h * a.key_dim, a.key_dim);
                let vh = columns(&v, h * a.value_dim, a.value_dim);
                let w = attention_weights(&qh, &kh, a.key_dim)?;
                put_columns(&mut concat, h * a.value_dim, &w.matmul(&vh)?);
                weights.push(w);
            }
            let mut r1 = concat.matmul(&as_matrix(g(WO)))?;
            add_row_bias(&mut r1, &g(BO).values);
            let r1 = r1.add(&x)?;
            let (h0, norm1) = layer_norm_cached(&r1, &g(LN1_G).values, &g(LN1_B).values);

            let mut ff_pre = h0.matmul(&as_matrix(g(FF1_W)))?;
            add_row_bias(&mut ff_pre, &g(FF1_B).values);
            let mut ff_act = ff_pre.clone();
            ff_act.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            let mut r2 = ff_act.matmul(&as_matrix(g(FF2_W)))?;
            add_row_bias(&mut r2, &g(FF2_B).values);
            let r2 = r2.add(&h0)?;
            let (out, norm2) = layer_norm_cached(&r2, &g(LN2_G).values, &g(LN2_B).values);

            layers.push(LayerCache {
                input: x,
                q,
                k,
                v,
                weights,
                concat,
                norm1,
                h0,
                ff_pre,
                ff_act,
                norm2,
            });
            x = out;
        }
        Ok(ForwardCache { layers, output_rows: x })
    }

    fn readout(&self, last: &[f64]) -> Vec<f64> {
        let w = &self.groups[self.readout_w()];
        let mut y = self.groups[self.readout_w() + 1].values.clone();
        for (j, xj) in last.iter().enumerate() {
            axpy(*xj, &w.values[j * w.cols..(j + 1) * w.cols], &mut y);
        }
        y
    }

    /// Encoded rows of the final block (before the readout).
    pub fn encode(&self, seq: &Matrix) -> Result<Matrix> {
        Ok(self.run(seq)?.output_rows)
    }

    pub fn forward(&self, seq: &Matrix) -> Result<Vec<f64>> {
        let cache = self.run(seq)?;
        let t = cache.output_rows.rows();
        Ok(self.readout(cache.output_rows.row(t - 1)))
    }

    pub fn loss_gradient(&self, seq: &Matrix, target: &[f64], grads: &mut Gradients) -> Result<f64> {
        let a = &self.arch;
        if target.len() != a.output_size {
            return shape_err("Transformer target length mismatch");
        }
        let cache = self.run(seq)?;
        let t_len = cache.output_rows.rows();
        let last = cache.output_rows.row(t_len - 1);
        let (loss, dy) = mse_with_grad(&self.readout(last), target);

        let rw = self.readout_w();
        let w = &self.groups[rw];
        let mut d_x = Matrix::zeros(t_len, a.model_dim);
        for j in 0..a.model_dim {
            let w_row = &w.values[j * w.cols..(j + 1) * w.cols];
            axpy(last[j], &dy, &mut grads[rw][j * w.cols..(j + 1) * w.cols]);
            d_x.set(t_len - 1, j, dot(w_row, &dy));
        }
        axpy(1.0, &dy, &mut grads[rw + 1]);

        let scale = 1.0 / (a.key_dim as f64).sqrt();
        for (l, lc) in cache.layers.iter().enumerate().rev() {
            let idx = |o: usize| Self::gi(l, o);
            let g = |o: usize| &self.groups[idx(o)];

            // Second residual block.
            let (dg, ds) = two_mut(grads, idx(LN2_G), idx(LN2_B));
            let d_r2 = layer_norm_backward(&d_x, &lc.norm2, &g(LN2_G).values, dg, ds);
            add_into(&mut grads[idx(FF2_W)], &lc.ff_act.t_matmul(&d_r2)?);
            column_sums_into(&d_r2, &mut grads[idx(FF2_B)]);
            let mut d_ff = d_r2.matmul_t(&as_matrix(g(FF2_W)))?;
            for (dv, pre) in d_ff.as_mut_slice().iter_mut().zip(lc.ff_pre.as_slice()) {
                if *pre <= 0.0 {
                    *dv = 0.0;
                }
            }
            add_into(&mut grads[idx(FF1_W)], &lc.h0.t_matmul(&d_ff)?);
            column_sums_into(&d_ff, &mut grads[idx(FF1_B)]);
            let d_h0 = d_r2.add(&d_ff.matmul_t(&as_matrix(g(FF1_W)))?)?;

            // First residual block.
            let (dg, ds) = two_mut(grads, idx(LN1_G), idx(LN1_B));
            let d_r1 = layer_norm_backward(&d_h0, &lc.norm1, &g(LN1_G).values, dg, ds);
            add_into(&mut grads[idx(WO)], &lc.concat.t_matmul(&d_r1)?);
            column_sums_into(&d_r1, &mut grads[idx(BO)]);
            let d_concat = d_r1.matmul_t(&as_matrix(g(WO)))?;

            let mut d_q = Matrix::zeros(t_len, a.heads * a.key_dim);
            let mut d_k = Matrix::zeros(t_len, a.heads * a.key_dim);
            let mut d_v = Matrix::zeros(t_len, a.heads * a.value_dim);
            for h in 0..a.heads {
                let weights = &lc.weights[h];
                let qh = columns(&lc.q, h * a.key_dim, a.key_dim);
                let kh = columns(&lc.k, h * a.key_dim, a.key_dim);
                let vh = columns(&lc.v, h * a.value_dim, a.value_dim);
                let d_zh = columns(&d_concat, h * a.value_dim, a.value_dim);
                put_columns(&mut d_v, h * a.value_dim, &weights.t_matmul(&d_zh)?);
                let d_w = d_zh.matmul_t(&vh)?;
                let mut d_s = Matrix::zeros(t_len, t_len);
                for i in 0..t_len {
                    let (wr, dr) = (weights.row(i), d_w.row(i));
                    let inner = dot(wr, dr);
                    let out = d_s.row_mut(i);
                    for j in 0..t_len {
                        out[j] = wr[j] * (dr[j] - inner) * scale;
                    }
                }
                put_columns(&mut d_q, h * a.key_dim, &d_s.matmul(&kh)?);
                put_columns(&mut d_k, h * a.key_dim, &d_s.t_matmul(&qh)?);
            }
            add_into(&mut grads[idx(WQ)], &lc.input.t_matmul(&d_q)?);
            add_into(&mut grads[idx(WK)], &lc.input.t_matmul(&d_k)?);
            add_into(&mut grads[idx(WV)], &lc.input.t_matmul(&d_v)?);
            let mut d_in = d_r1;
            d_in = d_in.add(&d_q.matmul_t(&as_matrix(g(WQ)))?)?;
            d_in = d_in.add(&d_k.matmul_t(&as_matrix(g(WK)))?)?;
            d_in = d_in.add(&d_v.matmul_t(&as_matrix(g(WV)))?)?;
            d_x = d_in;
        }
        add_into(&mut grads[EMB_W], &seq.t_matmul(&d_x)?);
        column_sums_into(&d_x, &mut grads[EMB_B]);
        Ok(loss)
    }
}

fn two_mut(grads: &mut Gradients, a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a < b);
    let (left, right) = grads.split_at_mut(b);
    (&mut left[a], &mut right[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn small() -> Transformer {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        Transformer::new(TransformerArch::with_heads(2, 8, 2, 2, 12, 3), &mut rng).unwrap()
    }

    #[test]
    fn encoding_at_zero() {
        let pe = positional_encoding(0, 8).unwrap();
        assert_eq!(pe, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(positional_encoding(1, 2).unwrap(), vec![1f64.sin(), 1f64.cos()]);
        assert!(positional_encoding(3, 5).is_err());
    }

    #[test]
    fn encoding_pairs_on_unit_circle() {
        for t in [0, 1, 7, 50, 999] {
            for dim in [2, 4, 16, 64] {
                let pe = positional_encoding(t, dim).unwrap();
                for pair in pe.chunks(2) {
                    assert!((pair[0] * pair[0] + pair[1] * pair[1] - 1.0).abs() < 1e-12);
                    assert!(pair[0].abs() <= 1.0 && pair[1].abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn zero_queries_average_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = random_matrix(5, 3, &mut rng);
        let v = random_matrix(5, 4, &mut rng);
        let out = attention(&Matrix::zeros(2, 3), &k, &v, 3).unwrap();
        for i in 0..2 {
            for j in 0..4 {
                let mean = v.column(j).iter().sum::<f64>() / 5.0;
                assert!((out.get(i, j) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_key_returns_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_matrix(3, 4, &mut rng);
        let k = random_matrix(1, 4, &mut rng);
        let v = random_matrix(1, 2, &mut rng);
        let out = attention(&q, &k, &v, 4).unwrap();
        for i in 0..3 {
            assert!((out.get(i, 0) - v.get(0, 0)).abs() < 1e-15);
            assert!((out.get(i, 1) - v.get(0, 1)).abs() < 1e-15);
        }
    }

    #[test]
    fn dominant_logit_approaches_hard_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random_matrix(6, 2, &mut rng);
        let v = random_matrix(6, 3, &mut rng);
        let q_dir = [0.3, -0.8];
        // Hard-max oracle: the key with the largest dot product wins outright.
        let best = (0..6)
            .max_by(|&a, &b| dot(k.row(a), &q_dir).total_cmp(&dot(k.row(b), &q_dir)))
            .unwrap();
        let mut last_err = f64::INFINITY;
        for scale in [1.0, 10.0, 100.0, 1000.0] {
            let q = Matrix::new(1, 2, vec![q_dir[0] * scale, q_dir[1] * scale]).unwrap();
            let out = attention(&q, &k, &v, 2).unwrap();
            let err = (0..3)
                .map(|j| (out.get(0, j) - v.get(best, j)).abs())
                .fold(0.0, f64::max);
            assert!(err <= last_err + 1e-15);
            last_err = err;
        }
        assert!(last_err < 1e-9);
    }

    #[test]
    fn weights_are_row_stochastic_and_outputs_in_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_matrix(4, 3, &mut rng).scale(3.0);
        let k = random_matrix(7, 3, &mut rng).scale(3.0);
        let v = random_matrix(7, 2, &mut rng);
        let w = attention_weights(&q, &k, 3).unwrap();
        for i in 0..4 {
            assert!((w.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let out = attention(&q, &k, &v, 3).unwrap();
        for j in 0..2 {
            let col = v.column(j);
            let (lo, hi) = col
                .iter()
                .fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(*x), b.max(*x)));
            for i in 0..4 {
                assert!(out.get(i, j) >= lo - 1e-12 && out.get(i, j) <= hi + 1e-12);
            }
        }
        assert!(attention(&q, &k, &random_matrix(6, 2, &mut rng), 3).is_err());
        assert!(attention(&q, &k, &v, 2).is_err());
    }

    #[test]
    fn layer_norm_rows_standardised() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_matrix(5, 16, &mut rng).scale(4.0);
        let (_, xhat) = layer_norm(&x, &[1.0; 16], &[0.0; 16]).unwrap();
        for i in 0..5 {
            let r = xhat.row(i);
            let mean = r.iter().sum::<f64>() / 16.0;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn permuting_positions_changes_output() {
        let model = small();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let seq = random_matrix(5, 2, &mut rng);
        let mut rows: Vec<Vec<f64>> = (0..5).map(|i| seq.row(i).to_vec()).collect();
        rows.swap(0, 3);
        let permuted = Matrix::from_rows(&rows).unwrap();
        let a = model.forward(&seq).unwrap();
        let b = model.forward(&permuted).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn zero_final_gain_gives_readout_bias() {
        let mut model = small();
        model
            .group_mut("layer1.ln2_gain")
            .unwrap()
            .values
            .iter_mut()
            .for_each(|v| *v = 0.0);
        model.group_mut("readout_b").unwrap().values = vec![0.5, -2.0, 3.25];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let out = model.forward(&random_matrix(4, 2, &mut rng)).unwrap();
        assert_eq!(out, vec![0.5, -2.0, 3.25]);
    }

    #[test]
    fn arch_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bad = TransformerArch {
            value_dim: 3,
            ..TransformerArch::with_heads(1, 8, 2, 1, 4, 1)
        };
        assert!(Transformer::new(bad, &mut rng).is_err());
        assert!(small().forward(&Matrix::zeros(3, 5)).is_err());
    }
}
