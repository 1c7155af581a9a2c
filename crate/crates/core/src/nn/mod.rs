//! Dense linear algebra and the feedforward classifier.

pub mod checkpoint;
mod dataset;
mod matrix;
mod network;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use dataset::{ImageShape, LabeledDataset};
pub use matrix::Matrix;
pub use network::{
    argmax, cross_entropy, finite_diff_importance, softmax_in_place, Activation, Gradients,
    Layer, Network, NetworkSpec, WeightIndex,
};
pub use train::{train, TrainConfig};
