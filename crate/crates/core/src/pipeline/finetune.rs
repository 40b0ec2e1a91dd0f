use std::path::Path;
use std::time::Instant;

use super::config::TrainConfig;
use super::record::{EpochLog, RunRecord};
use super::{batches, schedule};
use crate::encoder::{encode, init_task_head, task_head, Checkpoint, ENCODER_PREFIX};
use crate::error::{CertError, Result};
use crate::metrics::{compute_report, MetricReport, Predictions};
use crate::numeric::{lr_at, sgd_step, Graph, OptimizerState, ParamSet, Tensor};
use crate::rng::stream_rng;
use crate::text::{encode_example, BasicTokenizer, Example, Label, LabelKind, TaskSpec, TokenSequence, Vocabulary};

const EVAL_BATCH: usize = 64;

/// Lower middle element of the sorted values.
pub fn lower_median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// Gold labels of `examples` in the form predictions take. Errors if any
/// example is unlabeled.
pub fn gold_labels(task: &TaskSpec, examples: &[Example]) -> Result<Predictions> {
    let missing = |e: &Example| CertError::InvalidInput(format!("example `{}` has no label", e.guid));
    if task.label_kind.is_regression() {
        examples
            .iter()
            .map(|e| match e.label {
                Some(Label::Real(r)) => Ok(r),
                Some(Label::Class(c)) => Ok(c as f64),
                None => Err(missing(e)),
            })
            .collect::<Result<_>>()
            .map(Predictions::Scores)
    } else {
        examples
            .iter()
            .map(|e| match e.label {
                Some(Label::Class(c)) => Ok(c),
                Some(Label::Real(_)) => Err(CertError::InvalidInput(format!(
                    "example `{}` has a real label in a classification task",
                    e.guid
                ))),
                None => Err(missing(e)),
            })
            .collect::<Result<_>>()
            .map(Predictions::Classes)
    }
}

fn encode_all(examples: &[Example], vocab: &Vocabulary, max_len: usize) -> Result<Vec<TokenSequence>> {
    examples
        .iter()
        .map(|e| encode_example(e, vocab, &BasicTokenizer, max_len))
        .collect()
}

fn check_arity(task: &TaskSpec, examples: &[Example]) -> Result<()> {
    let pair = task.input_arity == crate::text::InputArity::Pair;
    if let Some(e) = examples.iter().find(|e| e.text_b.is_some() != pair) {
        return Err(CertError::InvalidInput(format!(
            "example `{}` does not match the {} input of task `{}`",
            e.guid,
            if pair { "pair" } else { "single-sentence" },
            task.name
        )));
    }
    Ok(())
}

fn predict_encoded(params: &ParamSet, ck: &Checkpoint, task: &TaskSpec, seqs: &[TokenSequence]) -> Result<Predictions> {
    let mut classes = Vec::new();
    let mut scores = Vec::new();
    for chunk in seqs.chunks(EVAL_BATCH) {
        let mut g = Graph::new();
        let bound = params.bind(&mut g, false);
        let out = encode(&mut g, &bound, &ck.config, chunk, None)?;
        let y = task_head(&mut g, &bound, out.pooled, task)?;
        let y = g.value(y);
        for r in 0..y.rows() {
            let row = y.row(r);
            if task.label_kind.is_regression() {
                scores.push(row[0]);
            } else {
                let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                classes.push(best);
            }
        }
    }
    Ok(if task.label_kind.is_regression() {
        Predictions::Scores(scores)
    } else {
        Predictions::Classes(classes)
    })
}

fn task_of(ck: &Checkpoint) -> Result<&TaskSpec> {
    ck.meta
        .task
        .as_ref()
        .ok_or_else(|| CertError::WorkflowOrder("checkpoint has no task head: run finetune first".into()))
}

/// Raw model outputs of a finetuned checkpoint.
pub fn predict(ck: &Checkpoint, examples: &[Example], vocab: &Vocabulary) -> Result<Predictions> {
    ck.check_vocab(vocab)?;
    let task = task_of(ck)?;
    check_arity(task, examples)?;
    let seqs = encode_all(examples, vocab, ck.config.max_seq_len)?;
    predict_encoded(&ck.params, ck, task, &seqs)
}

/// Every metric of the checkpoint's task on labeled `examples`.
pub fn evaluate(ck: &Checkpoint, examples: &[Example], vocab: &Vocabulary) -> Result<MetricReport> {
    let task = task_of(ck)?;
    let gold = gold_labels(task, examples)?;
    let preds = predict(ck, examples, vocab)?;
    compute_report(&task.metric_set, &preds, &gold)
}

/// Writes `index<TAB>prediction` rows. Class ids become their label
/// strings; regression scores are clipped to the label range.
pub fn write_predictions(path: &Path, task: &TaskSpec, preds: &Predictions) -> Result<()> {
    let mut out = String::from("index\tprediction\n");
    match preds {
        Predictions::Classes(c) => {
            for (i, &k) in c.iter().enumerate() {
                out.push_str(&format!("{i}\t{}\n", task.label_to_string(&Label::Class(k))));
            }
        }
        Predictions::Scores(s) => {
            let (lo, hi) = match task.label_kind {
                LabelKind::Regression { lo, hi } => (lo, hi),
                _ => (f64::NEG_INFINITY, f64::INFINITY),
            };
            for (i, &v) in s.iter().enumerate() {
                out.push_str(&format!("{i}\t{:.6}\n", v.clamp(lo, hi)));
            }
        }
    }
    std::fs::write(path, out).map_err(|e| CertError::io(path, e))
}

pub struct RestartResult {
    pub seed: u64,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub record: RunRecord,
    /// Encoder and head at the best epoch.
    pub best: Checkpoint,
}

pub struct FinetuneSummary {
    /// Name of the selection metric.
    pub metric: String,
    pub restarts: Vec<RestartResult>,
    pub median: f64,
    pub best: f64,
}

impl FinetuneSummary {
    /// The restart with the highest selection metric (first on ties).
    pub fn best_restart(&self) -> &RestartResult {
        self.restarts.iter().fold(
            &self.restarts[0],
            |b, r| if r.best_metric > b.best_metric { r } else { b },
        )
    }
}

/// `restart_count` independent finetuning runs with seeds `seed`,
/// `seed + 1`, ...; everything else is shared.
pub fn finetune(
    init: &Checkpoint,
    task: &TaskSpec,
    train_set: &[Example],
    dev_set: &[Example],
    vocab: &Vocabulary,
    train: &TrainConfig,
    seed: u64,
) -> Result<FinetuneSummary> {
    train.validate()?;
    let restarts = (0..train.restart_count as u64)
        .map(|r| finetune_once(init, task, train_set, dev_set, vocab, train, seed.wrapping_add(r)))
        .collect::<Result<Vec<_>>>()?;
    let metrics: Vec<f64> = restarts.iter().map(|r| r.best_metric).collect();
    Ok(FinetuneSummary {
        metric: task.metric_set[0].as_str().to_string(),
        median: lower_median(&metrics),
        best: metrics.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        restarts,
    })
}

/// One finetuning run: a fresh task head on the encoder of `init`, trained
/// end to end, keeping the epoch with the best dev value of the task's
/// first metric.
pub fn finetune_once(
    init: &Checkpoint,
    task: &TaskSpec,
    train_set: &[Example],
    dev_set: &[Example],
    vocab: &Vocabulary,
    train: &TrainConfig,
    seed: u64,
) -> Result<RestartResult> {
    let started = Instant::now();
    train.validate()?;
    task.validate()?;
    init.check_vocab(vocab)?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(CertError::InvalidInput(
            "finetuning needs nonempty train and dev sets".into(),
        ));
    }
    check_arity(task, train_set)?;
    check_arity(task, dev_set)?;
    let cfg = &init.config;
    let gold = gold_labels(task, train_set)?;
    let dev_gold = gold_labels(task, dev_set)?;
    let seqs = encode_all(train_set, vocab, cfg.max_seq_len)?;
    let dev_seqs = encode_all(dev_set, vocab, cfg.max_seq_len)?;

    let mut params = init.params.subset(ENCODER_PREFIX);
    params.extend_from(&init_task_head(cfg, task, &mut stream_rng(seed, "finetune-head")));
    let mut meta = init.meta.clone();
    meta.stages.push("finetune".into());
    meta.seed = seed;
    meta.task = Some(task.clone());
    meta.discardable.clear();

    let metric = task.metric_set[0];
    let mut record = RunRecord::new(
        "finetune",
        seed,
        &serde_json::json!({"task": task, "encoder": cfg, "train": train}),
    )?;
    let steps_per_epoch = seqs.len().div_ceil(train.batch_size);
    let sched = schedule(train, steps_per_epoch * train.epochs);
    let mut opt = OptimizerState::new(&params, train.momentum_coeff, train.weight_decay, train.base_lr)?;
    let mut shuffle_rng = stream_rng(seed, "finetune-shuffle");
    let mut dropout_rng = stream_rng(seed, "finetune-dropout");
    let mut best: Option<(usize, f64, ParamSet)> = None;
    let mut step = 0;
    for epoch in 1..=train.epochs {
        let mut total = 0.0;
        let mut n = 0;
        let mut lr = sched.base_lr;
        for idx in batches(seqs.len(), train.batch_size, &mut shuffle_rng, false) {
            let batch: Vec<TokenSequence> = idx.iter().map(|&i| seqs[i].clone()).collect();
            let mut g = Graph::new();
            let bound = params.bind(&mut g, true);
            let out = encode(&mut g, &bound, cfg, &batch, Some(&mut dropout_rng))?;
            let y = task_head(&mut g, &bound, out.pooled, task)?;
            let loss = match &gold {
                Predictions::Classes(c) => {
                    let t: Vec<usize> = idx.iter().map(|&i| c[i]).collect();
                    g.cross_entropy(y, &t)?
                }
                Predictions::Scores(s) => {
                    let t: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
                    let t = g.constant(Tensor::matrix(t.len(), 1, t)?);
                    let diff = g.sub(y, t)?;
                    let sq = g.mul(diff, diff)?;
                    g.mean(sq)?
                }
            };
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(CertError::NonFinite(format!(
                    "finetune loss is {value} at epoch {epoch}"
                )));
            }
            let grads = bound.named_grads(&g.backward(loss)?);
            lr = lr_at(step, &sched);
            step += 1;
            sgd_step(&mut params, &grads, &mut opt, lr)?;
            total += value;
            n += 1;
        }
        let preds = predict_encoded(&params, init, task, &dev_seqs)?;
        let dev = match compute_report(&[metric], &preds, &dev_gold) {
            Ok(r) => r.values[metric.as_str()],
            Err(e) => {
                log::warn!("dev {} undefined at epoch {epoch} ({e}); scored as 0", metric.as_str());
                0.0
            }
        };
        log::info!(
            "finetune seed {seed} epoch {epoch}: loss {:.6} dev {} {dev:.6}",
            total / n as f64,
            metric.as_str()
        );
        record.push_epoch(EpochLog {
            epoch,
            loss: total / n as f64,
            lr,
            dev_metric: Some(dev),
        })?;
        if best.as_ref().is_none_or(|(_, b, _)| dev > *b) {
            best = Some((epoch, dev, params.clone()));
        }
    }
    let (best_epoch, best_metric, best_params) = best.expect("at least one epoch");
    record.final_metrics.insert(metric.as_str().into(), best_metric);
    record.final_metrics.insert("best_epoch".into(), best_epoch as f64);
    record.finish(started);
    Ok(RestartResult {
        seed,
        best_epoch,
        best_metric,
        record,
        best: Checkpoint::new(cfg.clone(), vocab, meta, best_params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_median_anchors() {
        assert_eq!(lower_median(&[1.0, 3.0, 2.0, 5.0, 4.0]), 3.0);
        assert_eq!(lower_median(&[4.0, 1.0, 3.0, 2.0]), 2.0);
        assert_eq!(lower_median(&[0.7]), 0.7);
    }
}
