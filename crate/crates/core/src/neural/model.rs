use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{Lstm, LstmArch};
use super::mlp::{Mlp, MlpArch};
use super::params::{mse_with_grad, Gradients, ParamGroup};
use super::transformer::{Transformer, TransformerArch};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Architecture descriptor stored alongside the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Mlp(MlpArch),
    Lstm(LstmArch),
    Transformer(TransformerArch),
}

/// Any of the three trainable networks.
///
/// Inputs are matrices: sequence models read them as `T x features`, the MLP
/// reads the row-major entries as one flat vector.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Mlp(Mlp),
    Lstm(Lstm),
    Transformer(Transformer),
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    architecture: Architecture,
    groups: Vec<ParamGroup>,
}

impl Model {
    pub fn new<R: Rng>(arch: Architecture, rng: &mut R) -> Result<Self> {
        Ok(match arch {
            Architecture::Mlp(a) => Model::Mlp(Mlp::new(a, rng)?),
            Architecture::Lstm(a) => Model::Lstm(Lstm::new(a, rng)?),
            Architecture::Transformer(a) => Model::Transformer(Transformer::new(a, rng)?),
        })
    }

    pub fn from_parts(arch: Architecture, groups: Vec<ParamGroup>) -> Result<Self> {
        Ok(match arch {
            Architecture::Mlp(a) => Model::Mlp(Mlp::from_parts(a, groups)?),
            Architecture::Lstm(a) => Model::Lstm(Lstm::from_parts(a, groups)?),
            Architecture::Transformer(a) => Model::Transformer(Transformer::from_parts(a, groups)?),
        })
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            Model::Mlp(m) => Architecture::Mlp(m.arch().clone()),
            Model::Lstm(m) => Architecture::Lstm(m.arch().clone()),
            Model::Transformer(m) => Architecture::Transformer(m.arch().clone()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Mlp(_) => "mlp",
            Model::Lstm(_) => "lstm",
            Model::Transformer(_) => "transformer",
        }
    }

    pub fn groups(&self) -> &[ParamGroup] {
        match self {
            Model::Mlp(m) => m.groups(),
            Model::Lstm(m) => m.groups(),
            Model::Transformer(m) => m.groups(),
        }
    }

    pub fn groups_mut(&mut self) -> &mut [ParamGroup] {
        match self {
            Model::Mlp(m) => m.groups_mut(),
            Model::Lstm(m) => m.groups_mut(),
            Model::Transformer(m) => m.groups_mut(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.groups().iter().map(ParamGroup::len).sum()
    }

    pub fn output_size(&self) -> usize {
        match self {
            Model::Mlp(m) => m.output_size(),
            Model::Lstm(m) => m.arch().output_size,
            Model::Transformer(m) => m.arch().output_size,
        }
    }

    pub fn predict(&self, input: &Matrix) -> Result<Vec<f64>> {
        match self {
            Model::Mlp(m) => m.forward(input.as_slice()),
            Model::Lstm(m) => m.forward(input),
            Model::Transformer(m) => m.forward(input),
        }
    }

    /// MSE for one sample.
    pub fn loss(&self, input: &Matrix, target: &[f64]) -> Result<f64> {
        let pred = self.predict(input)?;
        if pred.len() != target.len() {
            return crate::error::shape_err("target length mismatch");
        }
        Ok(mse_with_grad(&pred, target).0)
    }

    /// Accumulates `∂loss/∂θ` into `grads` and returns the sample loss.
    pub fn loss_gradient(&self, input: &Matrix, target: &[f64], grads: &mut Gradients) -> Result<f64> {
        match self {
            Model::Mlp(m) => m.loss_gradient(input.as_slice(), target, grads),
            Model::Lstm(m) => m.loss_gradient(input, target, grads),
            Model::Transformer(m) => m.loss_gradient(input, target, grads),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            architecture: self.architecture(),
            groups: self.groups().to_vec(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        Self::from_parts(doc.architecture, doc.groups)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
