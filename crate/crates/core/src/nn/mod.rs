//! Layers, loss, optimizer and training loop, written once over [`Arith`]
//! so the LNS network and its double-precision mirror share every
//! operation order.

mod arith;
mod layers;
mod lns;
mod network;
mod optim;
mod spec;
mod tensor;
mod train;

pub use arith::Arith;
pub use layers::{BatchNorm, Conv2d, Dense, Layer, MaxPool, Param, Relu, SoftmaxXent, BN_MOMENTUM};
pub use lns::{DeltaSource, LnsArith, Pow2Table, POW2_RANGE, POW2_SEGMENTS};
pub use network::Network;
pub use optim::{sgd_step, OptimizerState, SgdConfig};
pub use spec::{LayerSpec, NetworkSpec};
pub use tensor::{LnsTensor, Tensor};
pub use train::{
    batch_plan, epoch_order, evaluate, trace_hash, train, train_epoch, EpochMetrics, EpochStats,
    TrainConfig,
};
