//! The four networks, their training and persistence.

pub mod adam;
pub mod checkpoint;
pub mod grad;
pub mod layer;
pub mod model;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use grad::{backprop, cross_entropy, loss_and_grad, softmax, Gradients};
pub use layer::{Conv2d, Dense, Layer, LayerKind, ParamGrads};
pub use model::{ActivationTrace, Model, ModelName, Recipe};
pub use train::{batch_gradients, evaluate_accuracy, train, EvalRow, EvalSchedule, TrainConfig, TrainingLog};
