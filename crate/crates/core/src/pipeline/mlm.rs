use std::time::Instant;

use rand::{Rng, RngCore};

use super::config::TrainConfig;
use super::record::{EpochLog, RunRecord};
use super::{batches, schedule};
use crate::encoder::{encode, init_encoder, mlm_logits, Checkpoint, CheckpointMeta, EncoderConfig};
use crate::error::{CertError, Result};
use crate::numeric::{lr_at, sgd_step, Bound, Graph, OptimizerState, ParamSet, Var};
use crate::rng::{item_rng, stream_rng};
use crate::text::{encode_text, BasicTokenizer, TokenSequence, Vocabulary, MASK, NUM_SPECIAL};

/// Fraction of maskable positions selected for prediction.
pub const MASK_PROB: f64 = 0.15;
/// Of the selected positions: share replaced by `[MASK]`, then share
/// replaced by a random token. The rest stay unchanged.
pub const MASK_TOKEN_SHARE: f64 = 0.8;
pub const RANDOM_TOKEN_SHARE: f64 = 0.1;

/// Corrupted input plus the `(position, original id)` pairs to predict.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedSequence {
    pub input: TokenSequence,
    pub targets: Vec<(usize, usize)>,
}

/// Real, non-special positions of `seq`.
pub fn maskable_positions(seq: &TokenSequence) -> Vec<usize> {
    (0..seq.len())
        .filter(|&i| seq.mask[i] == 1 && seq.ids[i] >= NUM_SPECIAL)
        .collect()
}

/// Selects each maskable position with probability [`MASK_PROB`] and
/// corrupts it 80/10/10.
pub fn mask_tokens(seq: &TokenSequence, vocab_size: usize, rng: &mut impl Rng) -> MaskedSequence {
    let mut input = seq.clone();
    let mut targets = Vec::new();
    for pos in maskable_positions(seq) {
        if !rng.random_bool(MASK_PROB) {
            continue;
        }
        targets.push((pos, seq.ids[pos]));
        let r: f64 = rng.random();
        if r < MASK_TOKEN_SHARE {
            input.ids[pos] = MASK;
        } else if r < MASK_TOKEN_SHARE + RANDOM_TOKEN_SHARE && vocab_size > NUM_SPECIAL {
            input.ids[pos] = rng.random_range(NUM_SPECIAL..vocab_size);
        }
    }
    MaskedSequence { input, targets }
}

/// Mean cross-entropy over the selected positions of `batch`, or `None`
/// when nothing in the batch is selected.
pub fn mlm_loss(
    g: &mut Graph,
    p: &Bound,
    cfg: &EncoderConfig,
    batch: &[&MaskedSequence],
    dropout_rng: Option<&mut dyn RngCore>,
) -> Result<Option<Var>> {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (b, m) in batch.iter().enumerate() {
        for &(pos, id) in &m.targets {
            rows.push(b * cfg.max_seq_len + pos);
            targets.push(id);
        }
    }
    if rows.is_empty() {
        return Ok(None);
    }
    let inputs: Vec<TokenSequence> = batch.iter().map(|m| m.input.clone()).collect();
    let out = encode(g, p, cfg, &inputs, dropout_rng)?;
    let selected = g.gather_rows(out.tokens, &rows)?;
    let logits = mlm_logits(g, p, selected)?;
    g.cross_entropy(logits, &targets).map(Some)
}

/// Loss of `params` on `masked` without dropout or updates.
pub fn mlm_eval_loss(params: &ParamSet, cfg: &EncoderConfig, masked: &[MaskedSequence]) -> Result<Option<f64>> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let refs: Vec<&MaskedSequence> = masked.iter().collect();
    Ok(mlm_loss(&mut g, &bound, cfg, &refs, None)?.map(|v| g.value(v).item()))
}

/// Encodes `corpus` and draws one fixed masking per sentence. Sentences
/// with no maskable token are skipped with a warning.
pub fn prepare_mlm_corpus(
    corpus: &[String],
    vocab: &Vocabulary,
    cfg: &EncoderConfig,
    seed: u64,
) -> Result<Vec<MaskedSequence>> {
    let mut out = Vec::with_capacity(corpus.len());
    for (i, s) in corpus.iter().enumerate() {
        let seq = encode_text(s, None, vocab, &BasicTokenizer, cfg.max_seq_len)?;
        if maskable_positions(&seq).is_empty() {
            log::warn!("sentence {i} has no maskable tokens; skipped");
            continue;
        }
        let mut rng = item_rng(seed, i as u64, "mlm-mask");
        out.push(mask_tokens(&seq, cfg.vocab_size, &mut rng));
    }
    Ok(out)
}

/// Masked-token pretraining of the encoder, starting from `init` or from
/// a fresh random encoder.
pub fn pretrain_mlm(
    init: Option<&Checkpoint>,
    corpus: &[String],
    vocab: &Vocabulary,
    encoder: &EncoderConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<(Checkpoint, RunRecord)> {
    let started = Instant::now();
    train.validate()?;
    if corpus.is_empty() {
        return Err(CertError::InvalidInput("MLM corpus is empty".into()));
    }
    let (cfg, mut params, mut meta) = match init {
        Some(ck) => {
            ck.check_vocab(vocab)?;
            (ck.config.clone(), ck.params.clone(), ck.meta.clone())
        }
        None => {
            let mut cfg = encoder.clone();
            cfg.vocab_size = vocab.len();
            let params = init_encoder(&cfg, &mut stream_rng(seed, "mlm-init"))?;
            (cfg, params, CheckpointMeta::default())
        }
    };
    let data = prepare_mlm_corpus(corpus, vocab, &cfg, seed)?;
    if data.is_empty() {
        return Err(CertError::InvalidInput(
            "no sentence of the MLM corpus has a maskable token".into(),
        ));
    }
    let mut record = RunRecord::new("mlm", seed, &serde_json::json!({"encoder": cfg, "train": train}))?;
    if let Some(initial) = mlm_eval_loss(&params, &cfg, &data)? {
        record.final_metrics.insert("initial_loss".into(), initial);
    }
    let steps_per_epoch = data.len().div_ceil(train.batch_size);
    let sched = schedule(train, steps_per_epoch * train.epochs);
    let mut opt = OptimizerState::new(&params, train.momentum_coeff, train.weight_decay, train.base_lr)?;
    let mut shuffle_rng = stream_rng(seed, "mlm-shuffle");
    let mut dropout_rng = stream_rng(seed, "mlm-dropout");
    let mut step = 0;
    for epoch in 1..=train.epochs {
        let mut total = 0.0;
        let mut counted = 0;
        let mut lr = sched.base_lr;
        for idx in batches(data.len(), train.batch_size, &mut shuffle_rng, false) {
            let batch: Vec<&MaskedSequence> = idx.iter().map(|&i| &data[i]).collect();
            let mut g = Graph::new();
            let bound = params.bind(&mut g, true);
            lr = lr_at(step, &sched);
            step += 1;
            let Some(loss) = mlm_loss(&mut g, &bound, &cfg, &batch, Some(&mut dropout_rng))? else {
                continue;
            };
            let value = g.value(loss).item();
            let grads = bound.named_grads(&g.backward(loss)?);
            sgd_step(&mut params, &grads, &mut opt, lr)?;
            // Token-weighted so a short final batch does not skew the epoch mean.
            let n: usize = batch.iter().map(|m| m.targets.len()).sum();
            total += value * n as f64;
            counted += n;
        }
        let loss = if counted == 0 { 0.0 } else { total / counted as f64 };
        log::info!("mlm epoch {epoch}: loss {loss:.6}");
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
    meta.stages.push("mlm".into());
    meta.seed = seed;
    record.finish(started);
    Ok((Checkpoint::new(cfg, vocab, meta, params), record))
}
