//! From-scratch vision transformer: patch/position embeddings, multi-head
//! self-attention encoder, multi-label sigmoid head, exact analytic
//! gradients, Adam training and binary checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod loss;
pub mod model;
pub mod ops;
pub mod tensor;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::ViTConfig;
pub use loss::{bce_with_logits, sigmoid};
pub use model::{
    count_params, encoder_layer_forward, multi_head_attention, self_attention, EncoderLayer,
    ForwardCache, ViTModel,
};
pub use ops::patchify;
pub use tensor::Tensor;
pub use train::{
    evaluate, predict_topk, score_history, top_k_ids, train, EpochMetrics, EvalMetrics, InputMode,
    TrainConfig,
};
