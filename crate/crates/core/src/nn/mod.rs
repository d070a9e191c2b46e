//! Dense-tensor CNN engine.
//!
//! Models are directed acyclic graphs of [`LayerSpec`] nodes over NHWC
//! tensors (`batch × time × frequency × channel`). The engine is generic over
//! [`Real`] so the same code trains in `f32` and is gradient-checked in `f64`.

pub(crate) mod checkpoint;
mod graph;
mod loss;
mod model;
pub mod ops;
mod optim;
mod schedule;
mod tensor;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use graph::{GraphBuilder, LayerSpec, ModelGraph, Node, Shape};
pub use loss::{fused_logit_grad, one_hot, softmax_cross_entropy};
pub use model::{Cache, Gradients, Mode, Model, Param, Trace};
pub use optim::{sgd_step, Sgd};
pub use schedule::{cosine_restart_lr, CosineRestart, ScheduleConfig};
pub use tensor::{Real, Tensor4};
pub use train::{
    predict_batched, snapshot_average, stack_batch, train, Example, TrainConfig, TrainOutcome,
};
