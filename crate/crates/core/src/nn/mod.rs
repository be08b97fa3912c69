//! Trainable conditional denoiser and the reference attention block.

pub mod attention;
pub mod checkpoint;
mod denoiser;
mod train;

pub use attention::{
    attention_forward, convert_to_null_text, null_text_forward, null_text_injection,
    AttentionBlock, AttentionMode,
};
pub use checkpoint::Checkpoint;
pub use denoiser::{Architecture, Denoiser, TrainingMetadata};
pub use train::{
    batch_loss, gradient_check, train, DatasetSpec, OptimizerKind, ProbeBatch, TrainConfig,
    TrainOutcome,
};
