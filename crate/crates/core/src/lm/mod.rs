//! Desk-scale transformer language model with hand-written gradients.

pub mod checkpoint;
pub mod config;
pub mod model;
pub mod tokenizer;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{ModelConfig, Objective, TrainConfig};
pub use model::{softmax_rows, ForwardCache, Layout, TransformerLM};
pub use tokenizer::Tokenizer;
pub use train::{train_lm, LossPoint};
