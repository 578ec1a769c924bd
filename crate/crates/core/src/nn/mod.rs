//! Minimal deterministic CNN engine: the plain and residual cell templates,
//! forward/backward passes, SGD with Nesterov momentum, evaluation and
//! checkpoints.

pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod network;
pub mod ops;
pub mod scalar;
pub mod spec;
pub mod tensor;
pub mod train;

pub use model::{forward_macs, Cell, ModelParams};
pub use network::{build_network, Model, Network, TrainableModel};
pub use scalar::Scalar;
pub use spec::{CellKind, SearchSpaceSpec};
pub use tensor::Tensor;
pub use train::{count_correct, evaluate, recalc_bn, train, train_step, BatchStream, LrSchedule, TrainConfig, TrainSummary};
