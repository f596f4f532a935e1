//! From-scratch graph neural network layers, training and inference.

pub mod activation;
pub mod batch;
pub mod layers;
pub mod loss;
pub mod matrix;
pub mod model;
pub mod optim;
pub mod search;
pub mod train;

pub use activation::Activation;
pub use batch::{GraphBatch, Topology};
pub use layers::{HeadMerge, Layer, LayerCache, LayerKind, LayerSpec};
pub use loss::{batch_loss, pose_loss, LossBreakdown};
pub use matrix::Matrix;
pub use model::{
    encode_dataset, encode_input, encode_sample, mlp_forward, pose_target, predict, reconstruct_angle, ArchitectureParams, Batch,
    Example, Family, Gradients, Model, ModelInput, ModelSpec, PoseEstimate, ViewBlocks,
};
pub use search::{random_search, SearchOutcome, SearchSpace};
pub use train::{train, train_with, EpochRecord, TrainConfig, TrainOutcome};
