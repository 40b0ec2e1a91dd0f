use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::loss::batch_contrastive_loss;
use super::momentum::momentum_update;
use super::queue::MoCoQueue;
use crate::encoder::{encode, project, projected_batch, EncoderConfig};
use crate::error::{CertError, Result};
use crate::numeric::{sgd_step, Graph, OptimizerState, ParamSet, Tensor};
use crate::text::TokenSequence;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoCoConfig {
    /// Queue capacity `K`.
    pub queue_size: usize,
    /// Key-encoder momentum `m`.
    pub momentum: f64,
    /// Softmax temperature `τ`.
    pub temperature: f64,
}

impl Default for MoCoConfig {
    fn default() -> Self {
        MoCoConfig {
            queue_size: 4096,
            momentum: 0.999,
            temperature: 0.07,
        }
    }
}

impl MoCoConfig {
    pub fn validate(&self, batch_size: usize) -> Result<()> {
        if batch_size == 0 {
            return Err(CertError::Config("batch size must be positive".into()));
        }
        if self.queue_size == 0 || !self.queue_size.is_multiple_of(batch_size) {
            return Err(CertError::Config(format!(
                "queue size {} must be a positive multiple of the batch size {batch_size}",
                self.queue_size
            )));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(CertError::Config(format!(
                "momentum must lie in [0, 1], got {}",
                self.momentum
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(CertError::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// One augmented sentence pair, already encoded. `query` is the first view,
/// `key` the second.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedPair {
    pub origin_id: u64,
    pub query: TokenSequence,
    pub key: TokenSequence,
}

/// Query encoder, its momentum mirror, and the key queue.
#[derive(Clone, Debug)]
pub struct MoCoState {
    pub config: MoCoConfig,
    pub encoder: EncoderConfig,
    /// Encoder plus projection head, trained by SGD.
    pub query: ParamSet,
    /// Momentum copy of `query`.
    pub key: ParamSet,
    pub queue: MoCoQueue,
}

impl MoCoState {
    /// Starts the key encoder as an exact copy of `query`.
    pub fn new(encoder: EncoderConfig, query: ParamSet, config: MoCoConfig, batch_size: usize) -> Result<Self> {
        config.validate(batch_size)?;
        encoder.validate()?;
        let queue = MoCoQueue::new(config.queue_size, encoder.d_proj)?;
        Ok(MoCoState {
            key: query.clone(),
            query,
            queue,
            config,
            encoder,
        })
    }

    fn encode_keys(&self, batch: &[EncodedPair]) -> Result<(Tensor, Vec<u64>)> {
        let seqs: Vec<TokenSequence> = batch.iter().map(|p| p.key.clone()).collect();
        let keys = projected_batch(&self.key, &self.encoder, &seqs, None)?;
        Ok((keys, batch.iter().map(|p| p.origin_id).collect()))
    }

    /// Fills the queue with `⌈K / batch_size⌉` key-only passes, cycling
    /// through `pairs` in order. Returns the number of passes.
    pub fn warmup(&mut self, pairs: &[EncodedPair], batch_size: usize) -> Result<usize> {
        if pairs.is_empty() {
            return Err(CertError::InvalidInput("queue warmup needs at least one pair".into()));
        }
        let passes = self.config.queue_size.div_ceil(batch_size);
        let mut cursor = 0;
        for _ in 0..passes {
            let batch: Vec<EncodedPair> = (0..batch_size)
                .map(|i| pairs[(cursor + i) % pairs.len()].clone())
                .collect();
            cursor = (cursor + batch_size) % pairs.len();
            let (keys, origins) = self.encode_keys(&batch)?;
            self.queue.enqueue_batch(&keys, &origins)?;
        }
        Ok(passes)
    }

    /// One contrastive update; returns the batch loss.
    ///
    /// Queries go through the query encoder with dropout, keys through the
    /// momentum encoder without gradients or dropout. After the SGD step
    /// the key encoder is pulled toward the query encoder and the new keys
    /// are enqueued.
    pub fn step(
        &mut self,
        batch: &[EncodedPair],
        opt: &mut OptimizerState,
        lr: f64,
        dropout_rng: &mut dyn RngCore,
    ) -> Result<f64> {
        let (keys, origins) = self.encode_keys(batch)?;
        let mut g = Graph::new();
        let bound = self.query.bind(&mut g, true);
        let seqs: Vec<TokenSequence> = batch.iter().map(|p| p.query.clone()).collect();
        let out = encode(&mut g, &bound, &self.encoder, &seqs, Some(dropout_rng))?;
        let z = project(&mut g, &bound, out.pooled)?;
        let loss = batch_contrastive_loss(&mut g, z, &keys, &origins, &self.queue, self.config.temperature)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(CertError::NonFinite(format!("contrastive loss is {value}")));
        }
        let grads = g.backward(loss)?;
        let grads = bound.named_grads(&grads);
        sgd_step(&mut self.query, &grads, opt, lr)?;
        momentum_update(&mut self.key, &self.query, self.config.momentum)?;
        self.queue.enqueue_batch(&keys, &origins)?;
        Ok(value)
    }
}

/// Fraction of pairs whose first view's nearest second view (by dot
/// product of projected vectors) is its own partner.
pub fn retrieval_accuracy(params: &ParamSet, cfg: &EncoderConfig, pairs: &[EncodedPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(CertError::InvalidInput("retrieval over zero pairs".into()));
    }
    let qs: Vec<TokenSequence> = pairs.iter().map(|p| p.query.clone()).collect();
    let ks: Vec<TokenSequence> = pairs.iter().map(|p| p.key.clone()).collect();
    let zq = projected_batch(params, cfg, &qs, None)?;
    let zk = projected_batch(params, cfg, &ks, None)?;
    let mut hits = 0;
    for i in 0..pairs.len() {
        let q = zq.row(i);
        let best = (0..pairs.len()).map(|j| (j, crate::numeric::dot(q, zk.row(j)))).fold(
            (usize::MAX, f64::NEG_INFINITY),
            |acc, (j, s)| if s > acc.1 { (j, s) } else { acc },
        );
        if best.0 == i {
            hits += 1;
        }
    }
    Ok(hits as f64 / pairs.len() as f64)
}
