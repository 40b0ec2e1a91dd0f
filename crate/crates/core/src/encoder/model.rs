//! Transformer encoder forward pass and the heads built on top of it.
//!
//! All functions record onto a caller-owned [`Graph`] through parameters
//! bound with [`ParamSet::bind`], so the same code serves training (trainable
//! binding, then `backward`) and inference (frozen binding).

use rand::{Rng, RngCore};

use super::config::EncoderConfig;
use crate::error::{CertError, Result};
use crate::numeric::{Bound, Graph, ParamSet, Tensor, Var};
use crate::text::{LabelKind, TaskSpec, TokenSequence};

pub const TOKEN_EMBEDDING: &str = "encoder.embed.token";
pub const POSITION_EMBEDDING: &str = "encoder.embed.position";
pub const MLM_BIAS: &str = "mlm.bias";
pub const ENCODER_PREFIX: &str = "encoder.";
pub const PROJECTION_PREFIX: &str = "proj.";
pub const HEAD_PREFIX: &str = "head.";

/// Added to the squared norm (as `eps²`) before L2 normalisation.
pub const NORM_EPS: f64 = 1e-12;

fn layer(i: usize, rest: &str) -> String {
    format!("encoder.layer{i}.{rest}")
}

fn randn(shape: &[usize], cfg: &EncoderConfig, rng: &mut impl Rng) -> Tensor {
    Tensor::randn(shape, cfg.init_std, rng)
}

fn insert_norm(params: &mut ParamSet, prefix: &str, d: usize) {
    params.insert(format!("{prefix}.gamma"), Tensor::filled(&[d], 1.0));
    params.insert(format!("{prefix}.beta"), Tensor::zeros(&[d]));
}

fn insert_affine(
    params: &mut ParamSet,
    prefix: &str,
    rows: usize,
    cols: usize,
    cfg: &EncoderConfig,
    rng: &mut impl Rng,
) {
    params.insert(format!("{prefix}.w"), randn(&[rows, cols], cfg, rng));
    params.insert(format!("{prefix}.b"), Tensor::zeros(&[cols]));
}

/// Encoder weights plus the MLM output bias. Weights are `N(0, init_std²)`,
/// biases zero, layer norms identity.
pub fn init_encoder(cfg: &EncoderConfig, rng: &mut impl Rng) -> Result<ParamSet> {
    cfg.validate()?;
    let d = cfg.d_model;
    let mut p = ParamSet::new();
    p.insert(TOKEN_EMBEDDING, randn(&[cfg.vocab_size, d], cfg, rng));
    p.insert(POSITION_EMBEDDING, randn(&[cfg.max_seq_len, d], cfg, rng));
    insert_norm(&mut p, "encoder.embed.ln", d);
    for i in 0..cfg.n_layers {
        for proj in ["q", "k", "v", "o"] {
            insert_affine(&mut p, &layer(i, &format!("attn.{proj}")), d, d, cfg, rng);
        }
        insert_norm(&mut p, &layer(i, "ln1"), d);
        insert_affine(&mut p, &layer(i, "ffn.in"), d, cfg.d_ff, cfg, rng);
        insert_affine(&mut p, &layer(i, "ffn.out"), cfg.d_ff, d, cfg, rng);
        insert_norm(&mut p, &layer(i, "ln2"), d);
    }
    insert_affine(&mut p, "encoder.pooler", d, d, cfg, rng);
    p.insert(MLM_BIAS, Tensor::zeros(&[cfg.vocab_size]));
    Ok(p)
}

/// Two-layer MLP `d_model → d_model → d_proj`.
///
/// Weights are `N(0, 1/fan_in)` rather than `init_std`: the head ends in an
/// L2 normalisation whose gradient scales with the inverse input norm, so
/// tiny initial outputs would make the first updates explode.
pub fn init_projection(cfg: &EncoderConfig, rng: &mut impl Rng) -> ParamSet {
    let mut p = ParamSet::new();
    let std = 1.0 / (cfg.d_model as f64).sqrt();
    for (name, cols) in [("proj.hidden", cfg.d_model), ("proj.out", cfg.d_proj)] {
        p.insert(format!("{name}.w"), Tensor::randn(&[cfg.d_model, cols], std, rng));
        p.insert(format!("{name}.b"), Tensor::zeros(&[cols]));
    }
    p
}

/// Single affine layer from the pooled representation to the task outputs.
pub fn init_task_head(cfg: &EncoderConfig, task: &TaskSpec, rng: &mut impl Rng) -> ParamSet {
    let mut p = ParamSet::new();
    insert_affine(&mut p, "head", cfg.d_model, task.label_kind.output_dim(), cfg, rng);
    p
}

/// Handles produced by one encoder pass over a batch.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// `[batch·seq_len, d_model]`, sequences stacked in batch order.
    pub tokens: Var,
    /// `[batch, d_model]`, the pooled `[CLS]` representation `h`.
    pub pooled: Var,
    /// Attention probabilities `[seq_len, seq_len]`, indexed
    /// `[layer][sequence][head]`.
    pub attention: Vec<Vec<Vec<Var>>>,
    pub batch: usize,
    pub seq_len: usize,
}

struct Dropout<'a> {
    rate: f64,
    rng: Option<&'a mut dyn RngCore>,
}

impl Dropout<'_> {
    fn apply(&mut self, g: &mut Graph, x: Var) -> Result<Var> {
        let Some(rng) = self.rng.as_deref_mut() else {
            return Ok(x);
        };
        if self.rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - self.rate);
        let shape = g.value(x).shape().to_vec();
        let numel = g.value(x).numel();
        let mask: Vec<f64> = (0..numel)
            .map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        let m = g.constant(Tensor::new(shape, mask)?);
        g.mul(x, m)
    }
}

fn affine(g: &mut Graph, p: &Bound, x: Var, prefix: &str) -> Result<Var> {
    let w = p.var(&format!("{prefix}.w"))?;
    let b = p.var(&format!("{prefix}.b"))?;
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

fn norm(g: &mut Graph, p: &Bound, x: Var, prefix: &str) -> Result<Var> {
    let gamma = p.var(&format!("{prefix}.gamma"))?;
    let beta = p.var(&format!("{prefix}.beta"))?;
    let n = g.layer_norm(x)?;
    let s = g.mul_row(n, gamma)?;
    g.add_row(s, beta)
}

fn check_finite(g: &Graph, x: Var, what: &str) -> Result<()> {
    if g.value(x).is_finite() {
        Ok(())
    } else {
        Err(CertError::NonFinite(what.to_string()))
    }
}

/// Runs the encoder over a batch of equal-length sequences.
///
/// Passing an RNG enables dropout (training mode); `None` is evaluation.
/// Padding positions receive `-inf` attention logits, so outputs at real
/// positions do not depend on what the padded positions contain.
pub fn encode(
    g: &mut Graph,
    p: &Bound,
    cfg: &EncoderConfig,
    batch: &[TokenSequence],
    dropout_rng: Option<&mut dyn RngCore>,
) -> Result<EncoderOutput> {
    let seq_len = cfg.max_seq_len;
    if batch.is_empty() {
        return Err(CertError::Shape("encode called with an empty batch".into()));
    }
    for (i, s) in batch.iter().enumerate() {
        if s.ids.len() != seq_len || s.mask.len() != seq_len {
            return Err(CertError::Shape(format!(
                "sequence {i} has length {} (mask {}), expected {seq_len}",
                s.ids.len(),
                s.mask.len()
            )));
        }
        if let Some(&bad) = s.ids.iter().find(|&&id| id >= cfg.vocab_size) {
            return Err(CertError::Shape(format!(
                "token id {bad} outside vocabulary of {}",
                cfg.vocab_size
            )));
        }
        if s.mask[0] == 0 {
            return Err(CertError::Shape(format!("sequence {i} has no real tokens")));
        }
    }
    let mut dropout = Dropout {
        rate: cfg.dropout_rate,
        rng: dropout_rng,
    };
    let b = batch.len();
    let d = cfg.d_model;
    let dh = cfg.head_dim();

    let ids: Vec<usize> = batch.iter().flat_map(|s| s.ids.iter().copied()).collect();
    let positions: Vec<usize> = (0..b).flat_map(|_| 0..seq_len).collect();
    let tok = g.gather_rows(p.var(TOKEN_EMBEDDING)?, &ids)?;
    let pos = g.gather_rows(p.var(POSITION_EMBEDDING)?, &positions)?;
    let emb = g.add(tok, pos)?;
    let emb = norm(g, p, emb, "encoder.embed.ln")?;
    let mut x = dropout.apply(g, emb)?;

    let masks: Vec<Var> = batch
        .iter()
        .map(|s| {
            let row: Vec<f64> = s
                .mask
                .iter()
                .map(|&m| if m == 1 { 0.0 } else { f64::NEG_INFINITY })
                .collect();
            let data: Vec<f64> = (0..seq_len).flat_map(|_| row.iter().copied()).collect();
            Tensor::matrix(seq_len, seq_len, data).map(|t| g.constant(t))
        })
        .collect::<Result<_>>()?;

    let scale = 1.0 / (dh as f64).sqrt();
    let mut attention = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let q = affine(g, p, x, &layer(l, "attn.q"))?;
        let k = affine(g, p, x, &layer(l, "attn.k"))?;
        let v = affine(g, p, x, &layer(l, "attn.v"))?;
        let mut seq_outputs = Vec::with_capacity(b);
        let mut layer_probs = Vec::with_capacity(b);
        for (si, &mask) in masks.iter().enumerate() {
            let row0 = si * seq_len;
            let mut heads = Vec::with_capacity(cfg.n_heads);
            let mut head_probs = Vec::with_capacity(cfg.n_heads);
            for h in 0..cfg.n_heads {
                let qh = g.block(q, row0, seq_len, h * dh, dh)?;
                let kh = g.block(k, row0, seq_len, h * dh, dh)?;
                let vh = g.block(v, row0, seq_len, h * dh, dh)?;
                let scores = g.matmul_bt(qh, kh)?;
                let scores = g.scale(scores, scale)?;
                let scores = g.add(scores, mask)?;
                let probs = g.softmax(scores)?;
                head_probs.push(probs);
                heads.push(g.matmul(probs, vh)?);
            }
            layer_probs.push(head_probs);
            seq_outputs.push(if heads.len() == 1 {
                heads[0]
            } else {
                g.concat_cols(&heads)?
            });
        }
        attention.push(layer_probs);
        let ctx = if seq_outputs.len() == 1 {
            seq_outputs[0]
        } else {
            g.concat_rows(&seq_outputs)?
        };
        let attn_out = affine(g, p, ctx, &layer(l, "attn.o"))?;
        let attn_out = dropout.apply(g, attn_out)?;
        let res = g.add(x, attn_out)?;
        let h1 = norm(g, p, res, &layer(l, "ln1"))?;

        let ff = affine(g, p, h1, &layer(l, "ffn.in"))?;
        let ff = g.gelu(ff)?;
        let ff = affine(g, p, ff, &layer(l, "ffn.out"))?;
        let ff = dropout.apply(g, ff)?;
        let res = g.add(h1, ff)?;
        x = norm(g, p, res, &layer(l, "ln2"))?;
        check_finite(g, x, &format!("encoder layer {l} output"))?;
    }

    let cls_rows: Vec<usize> = (0..b).map(|i| i * seq_len).collect();
    let cls = g.gather_rows(x, &cls_rows)?;
    let pooled = affine(g, p, cls, "encoder.pooler")?;
    let pooled = g.tanh(pooled)?;
    check_finite(g, pooled, "pooler output")?;
    debug_assert_eq!(g.value(pooled).shape(), &[b, d]);

    Ok(EncoderOutput {
        tokens: x,
        pooled,
        attention,
        batch: b,
        seq_len,
    })
}

/// Projection head `z = normalize(W₂·gelu(W₁·h + b₁) + b₂)`, row-wise.
pub fn project(g: &mut Graph, p: &Bound, pooled: Var) -> Result<Var> {
    let hidden = affine(g, p, pooled, "proj.hidden")?;
    let hidden = g.gelu(hidden)?;
    let out = affine(g, p, hidden, "proj.out")?;
    g.l2_normalize(out, NORM_EPS)
}

/// Vocabulary logits for each row of `token_rows`, using the token
/// embedding matrix as the output projection.
pub fn mlm_logits(g: &mut Graph, p: &Bound, token_rows: Var) -> Result<Var> {
    let emb = p.var(TOKEN_EMBEDDING)?;
    let logits = g.matmul_bt(token_rows, emb)?;
    g.add_row(logits, p.var(MLM_BIAS)?)
}

/// Task outputs from the pooled representation: class logits, or a single
/// regression score per row.
pub fn task_head(g: &mut Graph, p: &Bound, pooled: Var, task: &TaskSpec) -> Result<Var> {
    let w = p.var("head.w")?;
    let expected = task.label_kind.output_dim();
    let width = g.value(w).cols();
    if width != expected {
        return Err(CertError::Shape(format!(
            "task head has {width} outputs but task `{}` ({}) needs {expected}",
            task.name,
            match task.label_kind {
                LabelKind::Binary => "binary".to_string(),
                LabelKind::Multiclass { classes } => format!("{classes}-way"),
                LabelKind::Regression { .. } => "regression".to_string(),
            }
        )));
    }
    affine(g, p, pooled, "head")
}

/// Pooled representations without gradient tracking, one row per sequence.
pub fn pooled_batch(params: &ParamSet, cfg: &EncoderConfig, batch: &[TokenSequence]) -> Result<Tensor> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let out = encode(&mut g, &bound, cfg, batch, None)?;
    Ok(g.value(out.pooled).clone())
}

/// Projected unit vectors without gradient tracking, one row per sequence.
pub fn projected_batch(
    params: &ParamSet,
    cfg: &EncoderConfig,
    batch: &[TokenSequence],
    dropout_rng: Option<&mut dyn RngCore>,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let out = encode(&mut g, &bound, cfg, batch, dropout_rng)?;
    let z = project(&mut g, &bound, out.pooled)?;
    Ok(g.value(z).clone())
}
