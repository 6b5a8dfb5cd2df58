//! Fully connected network: `z = Wx + b` per layer, ReLU on hidden layers,
//! identity on the output layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{
    check_layout, gemv_acc, gemv_t_acc, initialise, mse_with_grad, outer_acc, Gradients, GroupSpec, Init, ParamGroup,
};
use crate::error::{shape_err, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    /// Input size first, output size last.
    pub layer_sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    arch: MlpArch,
    groups: Vec<ParamGroup>,
}

fn layout(arch: &MlpArch) -> Vec<GroupSpec> {
    arch.layer_sizes
        .windows(2)
        .enumerate()
        .flat_map(|(l, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            [
                GroupSpec::new(format!("W_{l}"), fan_out, fan_in, Init::Glorot { fan_in, fan_out }),
                GroupSpec::new(format!("b_{l}"), fan_out, 1, Init::Constant(0.0)),
            ]
        })
        .collect()
}

fn check_arch(arch: &MlpArch) -> Result<()> {
    if arch.layer_sizes.len() < 2 || arch.layer_sizes.contains(&0) {
        return shape_err(format!("invalid MLP layer sizes {:?}", arch.layer_sizes));
    }
    Ok(())
}

impl Mlp {
    pub fn new<R: Rng>(arch: MlpArch, rng: &mut R) -> Result<Self> {
        check_arch(&arch)?;
        let groups = initialise(&layout(&arch), rng);
        Ok(Self { arch, groups })
    }

    pub fn from_parts(arch: MlpArch, groups: Vec<ParamGroup>) -> Result<Self> {
        check_arch(&arch)?;
        check_layout(&layout(&arch), &groups)?;
        Ok(Self { arch, groups })
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [ParamGroup] {
        &mut self.groups
    }

    pub fn input_size(&self) -> usize {
        self.arch.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.arch.layer_sizes.last().unwrap()
    }

    fn n_layers(&self) -> usize {
        self.arch.layer_sizes.len() - 1
    }

    /// Activations of every layer, input first; hidden entries are post-ReLU.
    fn activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.input_size() {
            return shape_err(format!("MLP expects {} inputs, got {}", self.input_size(), x.len()));
        }
        let mut acts = vec![x.to_vec()];
        for l in 0..self.n_layers() {
            let (w, b) = (&self.groups[2 * l], &self.groups[2 * l + 1]);
            let mut z = b.values.clone();
            gemv_acc(&w.values, w.cols, acts.last().unwrap(), &mut z);
            if l + 1 < self.n_layers() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        Ok(acts)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.activations(x)?.pop().unwrap())
    }

    /// Adds `∂L/∂θ` of the per-sample MSE to `grads` and returns the loss.
    pub fn loss_gradient(&self, x: &[f64], target: &[f64], grads: &mut Gradients) -> Result<f64> {
        if target.len() != self.output_size() {
            return shape_err("MLP target length mismatch");
        }
        let acts = self.activations(x)?;
        let (loss, mut delta) = mse_with_grad(acts.last().unwrap(), target);
        for l in (0..self.n_layers()).rev() {
            let w = &self.groups[2 * l];
            outer_acc(&mut grads[2 * l], w.cols, &delta, &acts[l]);
            grads[2 * l + 1].iter_mut().zip(&delta).for_each(|(g, d)| *g += d);
            if l > 0 {
                let mut prev = vec![0.0; w.cols];
                gemv_t_acc(&w.values, w.cols, &delta, &mut prev);
                // ReLU mask from the stored post-activation values.
                for (p, a) in prev.iter_mut().zip(&acts[l]) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn with_values(arch: MlpArch, values: Vec<Vec<f64>>) -> Mlp {
        let groups = layout(&arch)
            .into_iter()
            .zip(values)
            .map(|(s, v)| ParamGroup {
                name: s.name,
                rows: s.rows,
                cols: s.cols,
                values: v,
            })
            .collect();
        Mlp::from_parts(arch, groups).unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let arch = MlpArch {
            layer_sizes: vec![3, 4, 2],
        };
        let m = with_values(arch, vec![vec![0.0; 12], vec![0.0; 4], vec![0.0; 8], vec![0.0; 2]]);
        assert_eq!(m.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_identity_layer_has_no_relu() {
        let arch = MlpArch {
            layer_sizes: vec![3, 3],
        };
        let eye = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let m = with_values(arch, vec![eye, vec![0.0; 3]]);
        assert_eq!(m.forward(&[-1.0, 2.0, -3.5]).unwrap(), vec![-1.0, 2.0, -3.5]);
    }

    #[test]
    fn hand_computed_3_4_2() {
        // W0 rows: [1,0,0] [0,1,0] [0,0,1] [1,1,1]; b0 = [0,-1,0.5,-10]
        // x = [1,2,-3] -> z0 = [1,1,-2.5,-10] -> relu [1,1,0,0]
        // W1 rows: [1,2,3,4] [-1,0.5,0,2]; b1 = [0.25,-0.5]
        // y = [1+2+0.25, -1+0.5-0.5] = [3.25, -1.0]
        let arch = MlpArch {
            layer_sizes: vec![3, 4, 2],
        };
        let m = with_values(
            arch,
            vec![
                vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0],
                vec![0.0, -1.0, 0.5, -10.0],
                vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.0, 2.0],
                vec![0.25, -0.5],
            ],
        );
        assert_eq!(m.forward(&[1.0, 2.0, -3.0]).unwrap(), vec![3.25, -1.0]);
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Mlp::new(
            MlpArch {
                layer_sizes: vec![2, 3, 1],
            },
            &mut rng,
        )
        .unwrap();
        assert!(m.forward(&[1.0]).is_err());
        assert!(Mlp::new(MlpArch { layer_sizes: vec![2] }, &mut rng).is_err());
        let mut g = super::super::params::zero_gradients(m.groups());
        assert!(m.loss_gradient(&[1.0, 2.0], &[1.0, 2.0], &mut g).is_err());
    }
}
