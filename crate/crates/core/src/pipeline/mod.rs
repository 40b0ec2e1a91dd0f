//! The three training stages (masked-token pretraining, contrastive
//! pretraining, finetuning), evaluation, and their configuration.

mod config;
mod cssl;
mod finetune;
mod mlm;
mod record;

pub use config::{apply_override, DataConfig, PipelineConfig, Stage, TrainConfig, TrainOverrides};
pub use cssl::{encode_pairs, pretrain_cssl, CsslOutcome, PairSource};
pub use finetune::{
    evaluate, finetune, finetune_once, gold_labels, lower_median, predict, write_predictions, FinetuneSummary,
    RestartResult,
};
pub use mlm::{
    mask_tokens, maskable_positions, mlm_eval_loss, mlm_loss, prepare_mlm_corpus, pretrain_mlm, MaskedSequence,
    MASK_PROB, MASK_TOKEN_SHARE, RANDOM_TOKEN_SHARE,
};
pub use record::{EpochLog, RunRecord};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::numeric::ScheduleConfig;

/// Shuffled index batches covering `0..n`.
pub(crate) fn batches(n: usize, batch_size: usize, rng: &mut impl Rng, drop_last: bool) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size)
        .filter(|c| !drop_last || c.len() == batch_size)
        .map(<[usize]>::to_vec)
        .collect()
}

pub(crate) fn schedule(train: &TrainConfig, total_steps: usize) -> ScheduleConfig {
    ScheduleConfig {
        base_lr: train.base_lr,
        total_steps,
        kind: train.schedule,
    }
}
