//! Peephole LSTM with a linear readout of the last hidden state.
//!
//! ```text
//! I_t = σ(W_xI x_t + W_hI h_{t-1} + W_cI ⊙ c_{t-1} + B_I)
//! F_t = σ(W_xF x_t + W_hF h_{t-1} + W_cF ⊙ c_{t-1} + B_F)
//! c_t = F_t ⊙ c_{t-1} + I_t ⊙ tanh(W_xc x_t + W_hc h_{t-1} + B_c)
//! O_t = σ(W_xO x_t + W_hO h_{t-1} + W_cO ⊙ c_t + B_O)
//! h_t = O_t ⊙ tanh(c_t)
//! ```
//!
//! The peephole weights are diagonal and stored as vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{
    check_layout, gemv_acc, gemv_t_acc, initialise, mse_with_grad, outer_acc, sigmoid, Gradients, GroupSpec, Init,
    ParamGroup,
};
use crate::error::{shape_err, Result};
use crate::linalg::Matrix;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmArch {
    pub input_size: usize,
    pub hidden_size: usize,
    pub output_size: usize,
}

// Group indices.
const W_XI: usize = 0;
const W_HI: usize = 1;
const W_CI: usize = 2;
const B_I: usize = 3;
const W_XF: usize = 4;
const W_HF: usize = 5;
const W_CF: usize = 6;
const B_F: usize = 7;
const W_XC: usize = 8;
const W_HC: usize = 9;
const B_C: usize = 10;
const W_XO: usize = 11;
const W_HO: usize = 12;
const W_CO: usize = 13;
const B_O: usize = 14;
const W_OUT: usize = 15;
const B_OUT: usize = 16;

fn layout(a: &LstmArch) -> Vec<GroupSpec> {
    let (n, m, p) = (a.input_size, a.hidden_size, a.output_size);
    let wx = |name: &str| GroupSpec::new(name, m, n, Init::Glorot { fan_in: n, fan_out: m });
    let wh = |name: &str| GroupSpec::new(name, m, m, Init::Glorot { fan_in: m, fan_out: m });
    let peep = |name: &str| GroupSpec::new(name, m, 1, Init::Glorot { fan_in: m, fan_out: m });
    let bias = |name: &str| GroupSpec::new(name, m, 1, Init::Constant(0.0));
    vec![
        wx("W_xI"),
        wh("W_hI"),
        peep("W_cI"),
        bias("B_I"),
        wx("W_xF"),
        wh("W_hF"),
        peep("W_cF"),
        bias("B_F"),
        wx("W_xc"),
        wh("W_hc"),
        bias("B_c"),
        wx("W_xO"),
        wh("W_hO"),
        peep("W_cO"),
        bias("B_O"),
        GroupSpec::new("W_out", p, m, Init::Glorot { fan_in: m, fan_out: p }),
        GroupSpec::new("B_out", p, 1, Init::Constant(0.0)),
    ]
}

fn check_arch(a: &LstmArch) -> Result<()> {
    if a.input_size == 0 || a.hidden_size == 0 || a.output_size == 0 {
        return shape_err(format!("invalid LSTM sizes {a:?}"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    arch: LstmArch,
    groups: Vec<ParamGroup>,
}

/// Gate activations of one step, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct StepState {
    pub input_gate: Vec<f64>,
    pub forget_gate: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl Lstm {
    pub fn new<R: Rng>(arch: LstmArch, rng: &mut R) -> Result<Self> {
        check_arch(&arch)?;
        let groups = initialise(&layout(&arch), rng);
        Ok(Self { arch, groups })
    }

    pub fn from_parts(arch: LstmArch, groups: Vec<ParamGroup>) -> Result<Self> {
        check_arch(&arch)?;
        check_layout(&layout(&arch), &groups)?;
        Ok(Self { arch, groups })
    }

    pub fn arch(&self) -> &LstmArch {
        &self.arch
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [ParamGroup] {
        &mut self.groups
    }

    pub fn group(&self, name: &str) -> Option<&ParamGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn group_mut(&mut self, name: &str) -> Option<&mut ParamGroup> {
        self.groups.iter_mut().find(|g| g.name == name)
    }

    fn w(&self, idx: usize) -> &[f64] {
        &self.groups[idx].values
    }

    /// One recurrence step; returns the full gate state.
    pub fn step_state(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<StepState> {
        let (n, m) = (self.arch.input_size, self.arch.hidden_size);
        if x.len() != n || h_prev.len() != m || c_prev.len() != m {
            return shape_err(format!(
                "lstm_step expects x:{n}, h:{m}, c:{m}; got {}, {}, {}",
                x.len(),
                h_prev.len(),
                c_prev.len()
            ));
        }
        let pre = |wx: usize, wh: usize, b: usize| {
            let mut a = self.w(b).to_vec();
            gemv_acc(self.w(wx), n, x, &mut a);
            gemv_acc(self.w(wh), m, h_prev, &mut a);
            a
        };
        let mut ai = pre(W_XI, W_HI, B_I);
        let mut af = pre(W_XF, W_HF, B_F);
        let ag = pre(W_XC, W_HC, B_C);
        let mut ao = pre(W_XO, W_HO, B_O);
        let (wci, wcf, wco) = (self.w(W_CI), self.w(W_CF), self.w(W_CO));
        let mut input_gate = vec![0.0; m];
        let mut forget_gate = vec![0.0; m];
        let mut candidate = vec![0.0; m];
        let mut output_gate = vec![0.0; m];
        let mut c = vec![0.0; m];
        let mut h = vec![0.0; m];
        for k in 0..m {
            ai[k] += wci[k] * c_prev[k];
            af[k] += wcf[k] * c_prev[k];
            input_gate[k] = sigmoid(ai[k]);
            forget_gate[k] = sigmoid(af[k]);
            candidate[k] = ag[k].tanh();
            c[k] = forget_gate[k] * c_prev[k] + input_gate[k] * candidate[k];
            ao[k] += wco[k] * c[k];
            output_gate[k] = sigmoid(ao[k]);
            h[k] = output_gate[k] * c[k].tanh();
        }
        Ok(StepState {
            input_gate,
            forget_gate,
            candidate,
            output_gate,
            c,
            h,
        })
    }

    /// `(h_t, c_t)` from one step.
    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = self.step_state(x, h_prev, c_prev)?;
        Ok((s.h, s.c))
    }

    fn check_sequence(&self, seq: &Matrix) -> Result<()> {
        if seq.cols() != self.arch.input_size || seq.rows() == 0 {
            return shape_err(format!(
                "LSTM expects a non-empty T x {} sequence, got {:?}",
                self.arch.input_size,
                seq.shape()
            ));
        }
        Ok(())
    }

    fn run(&self, seq: &Matrix) -> Result<Vec<StepState>> {
        self.check_sequence(seq)?;
        let m = self.arch.hidden_size;
        let mut states: Vec<StepState> = Vec::with_capacity(seq.rows());
        let zeros = vec![0.0; m];
        for t in 0..seq.rows() {
            let (h_prev, c_prev) = match states.last() {
                Some(s) => (&s.h, &s.c),
                None => (&zeros, &zeros),
            };
            let s = self.step_state(seq.row(t), h_prev, c_prev)?;
            states.push(s);
        }
        Ok(states)
    }

    fn readout(&self, h: &[f64]) -> Vec<f64> {
        let mut y = self.w(B_OUT).to_vec();
        gemv_acc(self.w(W_OUT), self.arch.hidden_size, h, &mut y);
        y
    }

    /// Runs the window from zero state and maps the final `h_t` to a prediction.
    pub fn forward(&self, seq: &Matrix) -> Result<Vec<f64>> {
        let states = self.run(seq)?;
        Ok(self.readout(&states.last().unwrap().h))
    }

    /// Backpropagation through time for the per-sample MSE.
    pub fn loss_gradient(&self, seq: &Matrix, target: &[f64], grads: &mut Gradients) -> Result<f64> {
        if target.len() != self.arch.output_size {
            return shape_err("LSTM target length mismatch");
        }
        let states = self.run(seq)?;
        let (n, m) = (self.arch.input_size, self.arch.hidden_size);
        let h_last = &states.last().unwrap().h;
        let (loss, dy) = mse_with_grad(&self.readout(h_last), target);
        outer_acc(&mut grads[W_OUT], m, &dy, h_last);
        grads[B_OUT].iter_mut().zip(&dy).for_each(|(g, d)| *g += d);

        let mut dh = vec![0.0; m];
        gemv_t_acc(self.w(W_OUT), m, &dy, &mut dh);
        let mut dc_next = vec![0.0; m];
        let zeros = vec![0.0; m];
        let (wci, wcf, wco) = (self.w(W_CI), self.w(W_CF), self.w(W_CO));

        let mut da_i = vec![0.0; m];
        let mut da_f = vec![0.0; m];
        let mut da_g = vec![0.0; m];
        let mut da_o = vec![0.0; m];
        for t in (0..states.len()).rev() {
            let s = &states[t];
            let (h_prev, c_prev) = if t > 0 {
                (&states[t - 1].h, &states[t - 1].c)
            } else {
                (&zeros, &zeros)
            };
            let mut dc_prev = vec![0.0; m];
            for k in 0..m {
                let tc = s.c[k].tanh();
                let o = s.output_gate[k];
                da_o[k] = dh[k] * tc * o * (1.0 - o);
                let dc = dc_next[k] + dh[k] * o * (1.0 - tc * tc) + da_o[k] * wco[k];
                let (i, f, g) = (s.input_gate[k], s.forget_gate[k], s.candidate[k]);
                da_f[k] = dc * c_prev[k] * f * (1.0 - f);
                da_i[k] = dc * g * i * (1.0 - i);
                da_g[k] = dc * i * (1.0 - g * g);
                grads[W_CI][k] += da_i[k] * c_prev[k];
                grads[W_CF][k] += da_f[k] * c_prev[k];
                grads[W_CO][k] += da_o[k] * s.c[k];
                dc_prev[k] = dc * f + da_i[k] * wci[k] + da_f[k] * wcf[k];
            }
            let x = seq.row(t);
            let mut dh_prev = vec![0.0; m];
            for (da, wx, wh, b) in [
                (&da_i, W_XI, W_HI, B_I),
                (&da_f, W_XF, W_HF, B_F),
                (&da_g, W_XC, W_HC, B_C),
                (&da_o, W_XO, W_HO, B_O),
            ] {
                outer_acc(&mut grads[wx], n, da, x);
                outer_acc(&mut grads[wh], m, da, h_prev);
                grads[b].iter_mut().zip(da.iter()).for_each(|(g, d)| *g += d);
                gemv_t_acc(self.w(wh), m, da, &mut dh_prev);
            }
            dh = dh_prev;
            dc_next = dc_prev;
        }
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arch() -> LstmArch {
        LstmArch {
            input_size: 3,
            hidden_size: 4,
            output_size: 2,
        }
    }

    fn zeroed(arch: LstmArch) -> Lstm {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut l = Lstm::new(arch, &mut rng).unwrap();
        l.groups_mut()
            .iter_mut()
            .for_each(|g| g.values.iter_mut().for_each(|v| *v = 0.0));
        l
    }

    fn random_small(seed: u64) -> Lstm {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut l = Lstm::new(arch(), &mut rng).unwrap();
        for g in l.groups_mut() {
            g.values.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
        l
    }

    /// Straight-line transcription of the gate equations, written without
    /// any of the slice kernels used by the implementation.
    fn oracle_step(l: &Lstm, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let g = |name: &str| l.group(name).unwrap();
        let mv = |name: &str, v: &[f64]| -> Vec<f64> {
            let w = g(name);
            (0..w.rows)
                .map(|r| (0..w.cols).map(|k| w.values[r * w.cols + k] * v[k]).sum())
                .collect()
        };
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let m = h.len();
        let (xi, hi, xf, hf, xc, hc, xo, ho) = (
            mv("W_xI", x),
            mv("W_hI", h),
            mv("W_xF", x),
            mv("W_hF", h),
            mv("W_xc", x),
            mv("W_hc", h),
            mv("W_xO", x),
            mv("W_hO", h),
        );
        let mut h_new = vec![0.0; m];
        let mut c_new = vec![0.0; m];
        for k in 0..m {
            let i = sig(xi[k] + hi[k] + g("W_cI").values[k] * c[k] + g("B_I").values[k]);
            let f = sig(xf[k] + hf[k] + g("W_cF").values[k] * c[k] + g("B_F").values[k]);
            c_new[k] = f * c[k] + i * (xc[k] + hc[k] + g("B_c").values[k]).tanh();
            let o = sig(xo[k] + ho[k] + g("W_cO").values[k] * c_new[k] + g("B_O").values[k]);
            h_new[k] = o * c_new[k].tanh();
        }
        (h_new, c_new)
    }

    #[test]
    fn zero_params_zero_state() {
        let l = zeroed(arch());
        let s = l.step_state(&[1.0, -2.0, 0.5], &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(s
            .input_gate
            .iter()
            .chain(&s.forget_gate)
            .chain(&s.output_gate)
            .all(|v| *v == 0.5));
        assert!(s.c.iter().chain(&s.h).all(|v| *v == 0.0));
    }

    #[test]
    fn saturated_gates_retain_memory() {
        let mut l = zeroed(arch());
        l.group_mut("B_F").unwrap().values.iter_mut().for_each(|v| *v = 40.0);
        l.group_mut("B_I").unwrap().values.iter_mut().for_each(|v| *v = -40.0);
        let c_prev = [0.3, -0.7, 1.2, 0.0];
        let (_, c) = l.step(&[0.0; 3], &[0.1, 0.2, -0.3, 0.4], &c_prev).unwrap();
        for (a, b) in c.iter().zip(c_prev) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn step_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..5 {
            let l = random_small(seed);
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (h1, c1) = l.step(&x, &h, &c).unwrap();
            let (h2, c2) = oracle_step(&l, &x, &h, &c);
            for (a, b) in h1.iter().zip(&h2).chain(c1.iter().zip(&c2)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_matches_oracle_rollout() {
        let l = random_small(7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let seq = Matrix::new(5, 3, (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (mut h, mut c) = (vec![0.0; 4], vec![0.0; 4]);
        for t in 0..5 {
            (h, c) = oracle_step(&l, seq.row(t), &h, &c);
        }
        let w = l.group("W_out").unwrap();
        let b = l.group("B_out").unwrap();
        let expect: Vec<f64> = (0..2)
            .map(|r| b.values[r] + (0..4).map(|k| w.values[r * 4 + k] * h[k]).sum::<f64>())
            .collect();
        let got = l.forward(&seq).unwrap();
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_params_give_readout_bias() {
        let mut l = zeroed(arch());
        l.group_mut("B_out").unwrap().values = vec![0.25, -1.5];
        let out = l.forward(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(out, vec![0.25, -1.5]);
    }

    #[test]
    fn hidden_state_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut l = random_small(3);
        for g in l.groups_mut() {
            g.values.iter_mut().for_each(|v| *v *= 20.0);
        }
        let (mut h, mut c) = (vec![0.0; 4], vec![0.0; 4]);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-100.0..100.0)).collect();
            (h, c) = l.step(&x, &h, &c).unwrap();
            assert!(h.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn shape_errors() {
        let l = random_small(1);
        assert!(l.step(&[0.0; 2], &[0.0; 4], &[0.0; 4]).is_err());
        assert!(l.forward(&Matrix::zeros(3, 2)).is_err());
        assert!(l.forward(&Matrix::zeros(0, 3)).is_err());
    }
}
