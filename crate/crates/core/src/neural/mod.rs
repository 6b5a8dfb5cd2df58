//! Trainable networks with hand-derived gradients: a ReLU MLP, a peephole
//! LSTM and an encoder-only Transformer, plus datasets, Adam training with
//! early stopping, autoregressive rollout and finite-difference checks.

pub mod dataset;
pub mod gradcheck;
pub mod lstm;
pub mod mlp;
pub mod model;
pub mod params;
pub mod train;
pub mod transformer;

pub use dataset::{MinMaxScaler, Samples, WindowedDataset};
pub use gradcheck::{gradient_check, GroupCheck};
pub use lstm::{Lstm, LstmArch};
pub use mlp::{Mlp, MlpArch};
pub use model::{Architecture, Model};
pub use params::{Gradients, ParamGroup};
pub use train::{forecast_rollout, mean_loss, train, train_with_validation, TrainConfig, TrainReport};
pub use transformer::{attention, positional_encoding, Transformer, TransformerArch};
