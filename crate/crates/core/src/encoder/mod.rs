//! The Transformer encoder `f(·)`, its projection head `g(·)`, the masked-token
//! output head, task heads, and checkpoint storage.

mod checkpoint;
mod config;
mod model;

pub use checkpoint::{Checkpoint, CheckpointMeta, FORMAT_VERSION, MAGIC};
pub use config::EncoderConfig;
pub use model::{
    encode, init_encoder, init_projection, init_task_head, mlm_logits, pooled_batch, project, projected_batch,
    task_head, EncoderOutput, ENCODER_PREFIX, HEAD_PREFIX, MLM_BIAS, NORM_EPS, POSITION_EMBEDDING, PROJECTION_PREFIX,
    TOKEN_EMBEDDING,
};
