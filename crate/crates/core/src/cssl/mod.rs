//! Momentum-contrast training of sentence representations.

mod loss;
mod momentum;
mod queue;
mod similarity;
mod state;

pub use loss::{batch_contrastive_loss, info_nce_with_grad, moco_loss, simclr_inbatch_loss};
pub use momentum::momentum_update;
pub use queue::{MoCoQueue, UNIT_NORM_TOL};
pub use similarity::cosine_sim;
pub use state::{retrieval_accuracy, EncodedPair, MoCoConfig, MoCoState};
