//! Layered self-attention encoder with one linear head per task, trained
//! framewise with a masked cross-entropy.
//!
//! The body is a stack of post-norm transformer layers applied to a linear
//! input projection plus sinusoidal positions. Each task head maps the last
//! layer's output to that tier's categories; the mask marker is not a class.
//! Gradients are derived by hand (see `backward`), and training is plain SGD
//! with an initial phase in which only the heads move.

mod backward;
mod checkpoint;
mod forward;
mod infer;
mod loss;
mod model;
mod train;

use thiserror::Error;

use crate::data::{DataError, LabelVocabulary, Tier};
use crate::linalg::LinalgError;

pub use backward::{loss_and_gradients, Gradients};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use forward::{forward, ForwardOutput};
pub use infer::{central_frame_accuracy, extract_all_layers, extract_features, predict_frames, Accuracy, LayerFeatures};
pub use loss::{log_softmax_rows, masked_cross_entropy, multitask_loss, softmax_rows, LossTerms};
pub use model::{EncoderLayer, EncoderModel, Head, LayerNorm, Linear, LAYER_NORM_EPS};
pub use train::{make_batches, train, train_model, BatchItem, LogRow, Phase, TrainingBatch, TrainingLog};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite activation in {layer}")]
    NumericalFailure { layer: String },
    #[error("no labeled frames: every label is the mask marker")]
    NoLabeledFrames,
    #[error("training diverged at update {update} (loss {loss})")]
    TrainingDiverged { update: usize, loss: f64 },
    #[error("layer {layer} out of range for a {n_layers}-layer model")]
    InvalidLayer { layer: usize, n_layers: usize },
    #[error("task error: {0}")]
    Task(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    /// Fixed learning rate, no momentum or weight decay.
    Sgd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub d_input: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub learning_rate: f64,
    pub head_only_updates: usize,
    pub total_updates: usize,
    pub batch_max_frames: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_input: 16,
            d_model: 32,
            n_layers: 6,
            n_heads: 1,
            d_ff: 64,
            learning_rate: 0.1,
            head_only_updates: 200,
            total_updates: 4000,
            batch_max_frames: 400,
            seed: 0,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let counts = [
            ("d_input", self.d_input),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("total_updates", self.total_updates),
            ("batch_max_frames", self.batch_max_frames),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(EncoderError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(EncoderError::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.head_only_updates > self.total_updates {
            return Err(EncoderError::Config("head_only_updates exceeds total_updates".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(EncoderError::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// One classification task: a tier and the categories its head predicts.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub tier: Tier,
    pub vocabulary: LabelVocabulary,
}

impl TaskSpec {
    pub fn new(vocabulary: LabelVocabulary) -> Self {
        Self {
            tier: vocabulary.tier,
            vocabulary,
        }
    }
}

pub(crate) fn validate_tasks(tasks: &[TaskSpec]) -> Result<(), EncoderError> {
    if tasks.is_empty() {
        return Err(EncoderError::Task("at least one task is required".into()));
    }
    for (i, t) in tasks.iter().enumerate() {
        if t.vocabulary.is_empty() {
            return Err(EncoderError::Task(format!("{} vocabulary is empty", t.tier)));
        }
        if t.vocabulary.tier != t.tier {
            return Err(EncoderError::Task(format!("{} task carries a {} vocabulary", t.tier, t.vocabulary.tier)));
        }
        if tasks[..i].iter().any(|o| o.tier == t.tier) {
            return Err(EncoderError::Task(format!("more than one head for tier {}", t.tier)));
        }
    }
    Ok(())
}
