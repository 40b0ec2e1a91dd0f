use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use super::config::TrainConfig;
use super::record::{EpochLog, RunRecord};
use super::{batches, schedule};
use crate::augment::{make_pairs, AugmentConfig, AugmentMethod, AugmentedPair, Lexicon};
use crate::cssl::{EncodedPair, MoCoConfig, MoCoState};
use crate::encoder::{init_projection, Checkpoint, EncoderConfig, ENCODER_PREFIX, MLM_BIAS, PROJECTION_PREFIX};
use crate::error::{CertError, Result};
use crate::numeric::{lr_at, OptimizerState};
use crate::rng::stream_rng;
use crate::text::{encode_text, BasicTokenizer, Vocabulary};

/// Encodes both views of every pair.
pub fn encode_pairs(pairs: &[AugmentedPair], vocab: &Vocabulary, cfg: &EncoderConfig) -> Result<Vec<EncodedPair>> {
    pairs
        .iter()
        .map(|p| {
            Ok(EncodedPair {
                origin_id: p.origin_id,
                query: encode_text(&p.x_prime, None, vocab, &BasicTokenizer, cfg.max_seq_len)?,
                key: encode_text(&p.x_double_prime, None, vocab, &BasicTokenizer, cfg.max_seq_len)?,
            })
        })
        .collect()
}

/// Where the contrastive stage gets its augmented pairs.
#[derive(Clone, Copy)]
pub enum PairSource<'a> {
    /// The same pairs every epoch (e.g. a back-translated file).
    Fixed(&'a [AugmentedPair]),
    /// Fresh EDA pairs of `corpus` each epoch, drawn with a per-epoch seed.
    Resampled {
        corpus: &'a [String],
        augment: &'a AugmentConfig,
        lexicon: &'a Lexicon,
    },
}

impl PairSource<'_> {
    fn len(&self) -> usize {
        match self {
            PairSource::Fixed(p) => p.len(),
            PairSource::Resampled { corpus, .. } => corpus.len(),
        }
    }

    fn pairs(&self, seed: u64, epoch: usize) -> Result<Vec<AugmentedPair>> {
        match *self {
            PairSource::Fixed(p) => Ok(p.to_vec()),
            PairSource::Resampled {
                corpus,
                augment,
                lexicon,
            } => {
                if augment.method != AugmentMethod::Eda {
                    return Err(CertError::Config(
                        "per-epoch resampling needs EDA; back-translated pairs must be supplied as a file".into(),
                    ));
                }
                let epoch_seed = stream_rng(seed, &format!("cssl-augment-{epoch}")).random();
                make_pairs(corpus, augment, lexicon, None, epoch_seed)
            }
        }
    }
}

pub struct CsslOutcome {
    pub checkpoint: Checkpoint,
    pub record: RunRecord,
    /// Final query and key encoders and queue.
    pub state: MoCoState,
}

/// Continues training the encoder of `init` with momentum contrast over
/// augmented pairs of unlabeled text.
///
/// Epoch 0 pairs fill the queue; epoch `e` trains on the pairs of `source`
/// for that epoch.
///
/// The key encoder starts as an exact copy of the query encoder. A
/// projection head is reused from `init` when present, otherwise freshly
/// initialised; the output checkpoint keeps it but marks it discardable.
/// Starting from an encoder that has not been pretrained is refused unless
/// `allow_random_init` is set.
pub fn pretrain_cssl(
    init: &Checkpoint,
    source: PairSource<'_>,
    vocab: &Vocabulary,
    moco: &MoCoConfig,
    train: &TrainConfig,
    seed: u64,
    allow_random_init: bool,
) -> Result<CsslOutcome> {
    let started = Instant::now();
    if !init.is_pretrained() && !allow_random_init {
        return Err(CertError::WorkflowOrder(
            "contrastive pretraining continues from a pretrained encoder: run pretrain-mlm first and pass its \
             checkpoint, or pass --allow-random-init"
                .into(),
        ));
    }
    train.validate()?;
    init.check_vocab(vocab)?;
    if source.len() < train.batch_size {
        return Err(CertError::InvalidInput(format!(
            "{} augmented pairs cannot fill one batch of {}",
            source.len(),
            train.batch_size
        )));
    }
    let cfg = init.config.clone();
    let mut query = init.params.subset(ENCODER_PREFIX);
    let proj = init.params.subset(PROJECTION_PREFIX);
    if proj.is_empty() {
        query.extend_from(&init_projection(&cfg, &mut stream_rng(seed, "cssl-proj-init")));
    } else {
        query.extend_from(&proj);
    }
    let mut state = MoCoState::new(cfg.clone(), query, moco.clone(), train.batch_size)?;

    let mut record = RunRecord::new(
        "cssl",
        seed,
        &serde_json::json!({"encoder": cfg, "moco": moco, "train": train}),
    )?;
    let mut shuffle_rng = stream_rng(seed, "cssl-shuffle");
    let mut dropout_rng = stream_rng(seed, "cssl-dropout");

    let mut order = encode_pairs(&source.pairs(seed, 0)?, vocab, &cfg)?;
    order.shuffle(&mut shuffle_rng);
    state.warmup(&order, train.batch_size)?;

    let steps_per_epoch = source.len() / train.batch_size;
    let sched = schedule(train, steps_per_epoch * train.epochs);
    let mut opt = OptimizerState::new(&state.query, train.momentum_coeff, train.weight_decay, train.base_lr)?;
    let mut step = 0;
    let mut data = order;
    for epoch in 1..=train.epochs {
        if epoch > 1 || !matches!(source, PairSource::Fixed(_)) {
            data = encode_pairs(&source.pairs(seed, epoch)?, vocab, &cfg)?;
        }
        let mut total = 0.0;
        let mut lr = sched.base_lr;
        for idx in batches(data.len(), train.batch_size, &mut shuffle_rng, true) {
            let batch: Vec<EncodedPair> = idx.iter().map(|&i| data[i].clone()).collect();
            lr = lr_at(step, &sched);
            step += 1;
            total += state.step(&batch, &mut opt, lr, &mut dropout_rng)?;
        }
        let loss = total / steps_per_epoch as f64;
        log::info!("cssl epoch {epoch}: loss {loss:.6}");
        record.push_epoch(EpochLog {
            epoch,
            loss,
            lr,
            dev_metric: None,
        })?;
    }
    record
        .final_metrics
        .insert("loss".into(), record.epochs.last().map_or(0.0, |e| e.loss));

    let mut params = state.query.clone();
    if let Ok(bias) = init.params.get(MLM_BIAS) {
        params.insert(MLM_BIAS, bias.clone());
    }
    let mut meta = init.meta.clone();
    meta.stages.push("cssl".into());
    meta.seed = seed;
    for name in state.query.names().filter(|n| n.starts_with(PROJECTION_PREFIX)) {
        if !meta.discardable.iter().any(|d| d == name) {
            meta.discardable.push(name.to_string());
        }
    }
    record.finish(started);
    Ok(CsslOutcome {
        checkpoint: Checkpoint::new(cfg, vocab, meta, params),
        record,
        state,
    })
}
