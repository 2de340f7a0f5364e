//! Layer specifications, the architecture catalog, and SGD training.

pub mod catalog;
mod model;
mod spec;
mod train;

pub use catalog::{lookup, model_spec, Architecture, CnnVariant};
pub use model::{ForwardPass, Gradients, Param, TrainedModel};
pub use spec::{LayerSpec, ModelSpec, Shape};
pub use train::{mean_loss, train, LogEntry, TrainConfig, TrainingLog};
