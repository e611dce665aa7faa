//! Feed-forward network substrate: dense layers, backprop, optimizers,
//! autoencoder and a shared-encoder multi-head regressor.

mod dense;
mod regressor;
mod snapshot;
mod train;

pub use dense::{layers_from_sizes, mse, Activation, DenseNet, Example, LayerSpec, Trace};
pub use regressor::{
    ArchitectureConfig, Autoencoder, HeadInit, HeadSpec, HeadView, MultiHeadRegressor,
    ReconstructionView,
};
pub use snapshot::{NetDescriptor, Snapshot, WeightSnapshot, FORMAT_VERSION};
pub use train::{
    train, train_with, BatchSource, OptimizerKind, Regularizer, ShuffledBatches, TrainConfig,
    TrainReport, Trainable,
};
