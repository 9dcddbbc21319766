//! Trainable token classifier: frozen pretrained word embeddings feeding a
//! bidirectional tanh recurrence and a two-way softmax output, trained with
//! mean per-token cross-entropy.

mod embedding;
mod io;
mod model;
mod train;

pub use embedding::{load_embeddings, load_embeddings_reader, EmbeddingTable};
pub use io::MODEL_MAGIC;
pub use model::{
    finite_difference_grads, grad_check, max_relative_error, ForwardPass, GradCheck, Gradients,
    RecurrentBlock, TaggerModel, BLOCK_NAMES, CLASS_KEYWORD, MODEL_VERSION,
};
pub use train::{
    predict_labels, predict_terms, token_micro_f1, train, EpochRecord, TrainConfig, TrainHistory,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("line {line} has the wrong number of values")]
    DimensionMismatch { line: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("embedding file contains no vectors")]
    EmptyFile,
    #[error("cannot run the network on an empty sequence")]
    EmptySequence,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad model file: {0}")]
    BadModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
