//! Finite-difference gradient oracle shared by the gradient tests.

#![allow(dead_code)]

use cert_core::cssl::{batch_contrastive_loss, MoCoQueue};
use cert_core::encoder::{
    encode, init_encoder, init_projection, init_task_head, mlm_logits, project, task_head, EncoderConfig,
};
use cert_core::numeric::{Bound, Graph, ParamSet, Tensor, Var};
use cert_core::text::{encode_ids, LabelKind, TaskSpec, TokenSequence, NUM_SPECIAL};
use cert_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
/// Denominator floor for relative error, as a fraction of `max(1, |loss|)`.
///
/// Central differences cannot resolve a gradient much below
/// `machine_eps · |loss| / H`, so entries whose true gradient is zero (for
/// example attention key biases, which only shift softmax rows) are judged
/// against this floor instead of against their own size.
pub const REL_FLOOR: f64 = 1e-5;

pub fn rel_err(a: f64, n: f64, loss: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR * loss.abs().max(1.0))
}

/// Largest relative error between backprop and central differences over
/// every entry of every parameter. `f` must be deterministic.
pub fn max_grad_error<F>(params: &mut ParamSet, f: F) -> Result<(f64, String)>
where
    F: Fn(&mut Graph, &Bound) -> Result<Var>,
{
    let mut g = Graph::new();
    let bound = params.bind(&mut g, true);
    let loss = f(&mut g, &bound)?;
    let loss_value = g.value(loss).item();
    let grads = bound.named_grads(&g.backward(loss)?);
    let eval = |p: &ParamSet| -> Result<f64> {
        let mut g = Graph::new();
        let b = p.bind(&mut g, false);
        let l = f(&mut g, &b)?;
        Ok(g.value(l).item())
    };
    let names: Vec<String> = params.names().map(String::from).collect();
    let mut worst = (0.0, String::new());
    for name in names {
        let n = params.get(&name)?.numel();
        for i in 0..n {
            let orig = params.get(&name)?.data()[i];
            params.get_mut(&name).unwrap().data_mut()[i] = orig + H;
            let up = eval(params)?;
            params.get_mut(&name).unwrap().data_mut()[i] = orig - H;
            let down = eval(params)?;
            params.get_mut(&name).unwrap().data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * H);
            let analytic = grads.get(&name).map_or(0.0, |t| t.data()[i]);
            let e = rel_err(analytic, numeric, loss_value);
            if e > worst.0 {
                worst = (e, format!("{name}[{i}]: backprop {analytic:e}, numeric {numeric:e}"));
            }
        }
    }
    Ok(worst)
}

pub struct GradCase {
    pub cfg: EncoderConfig,
    pub params: ParamSet,
    pub batch: Vec<TokenSequence>,
    pub class_task: TaskSpec,
    pub mlm_rows: Vec<usize>,
    pub mlm_targets: Vec<usize>,
    pub weights: Tensor,
    pub queue: MoCoQueue,
    pub keys: Tensor,
    pub dropout_seed: u64,
}

fn unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// A random small model (`d_model ≤ 16`, sequence length ≤ 8) with a
/// padded batch and targets for every head.
pub fn random_case(seed: u64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_heads = [1, 2, 4][rng.random_range(0..3)];
    let d_model = n_heads * rng.random_range(1..=16 / n_heads);
    let d_model = d_model.max(2);
    let n_heads = if d_model % n_heads == 0 { n_heads } else { 1 };
    let cfg = EncoderConfig {
        vocab_size: rng.random_range(NUM_SPECIAL + 2..NUM_SPECIAL + 12),
        d_model,
        n_heads,
        n_layers: rng.random_range(1..=2),
        d_ff: rng.random_range(2..=24),
        max_seq_len: rng.random_range(3..=8),
        dropout_rate: 0.1,
        d_proj: rng.random_range(2..=8),
        init_std: 0.5,
    };
    let classes = rng.random_range(2..=4);
    let class_task = TaskSpec {
        name: "grad".into(),
        input_arity: cert_core::text::InputArity::Single,
        label_kind: if classes == 2 {
            LabelKind::Binary
        } else {
            LabelKind::Multiclass { classes }
        },
        metric_set: vec![cert_core::text::MetricName::Accuracy],
        label_values: (0..classes).map(|c| c.to_string()).collect(),
    };
    let mut params = init_encoder(&cfg, &mut rng).unwrap();
    params.extend_from(&init_projection(&cfg, &mut rng));
    params.extend_from(&init_task_head(&cfg, &class_task, &mut rng));
    // Non-trivial norm parameters so their gradients are exercised.
    for (name, t) in params.iter_mut() {
        if name.ends_with(".gamma") || name.ends_with(".beta") || name.ends_with(".b") || name == "mlm.bias" {
            for v in t.data_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
    }
    let b = rng.random_range(1..=3);
    let batch: Vec<TokenSequence> = (0..b)
        .map(|_| {
            let len = rng.random_range(1..=cfg.max_seq_len - 2);
            let ids: Vec<usize> = (0..len)
                .map(|_| rng.random_range(NUM_SPECIAL..cfg.vocab_size))
                .collect();
            encode_ids(&ids, None, cfg.max_seq_len).unwrap()
        })
        .collect();
    let mut mlm_rows = Vec::new();
    let mut mlm_targets = Vec::new();
    for (s, seq) in batch.iter().enumerate() {
        for p in 0..seq.real_len() {
            if rng.random_bool(0.5) {
                mlm_rows.push(s * cfg.max_seq_len + p);
                mlm_targets.push(rng.random_range(0..cfg.vocab_size));
            }
        }
    }
    if mlm_rows.is_empty() {
        mlm_rows.push(0);
        mlm_targets.push(NUM_SPECIAL);
    }
    let weights = Tensor::randn(
        &[b * cfg.max_seq_len, d_model],
        1.0 / ((b * cfg.max_seq_len * d_model) as f64).sqrt(),
        &mut rng,
    );
    let mut queue = MoCoQueue::new(4, cfg.d_proj).unwrap();
    for o in 0..rng.random_range(0..=4u64) {
        queue.enqueue(&unit(&mut rng, cfg.d_proj), o).unwrap();
    }
    let keys = Tensor::matrix(b, cfg.d_proj, (0..b).flat_map(|_| unit(&mut rng, cfg.d_proj)).collect()).unwrap();
    GradCase {
        cfg,
        params,
        batch,
        class_task,
        mlm_rows,
        mlm_targets,
        weights,
        queue,
        keys,
        dropout_seed: seed ^ 0x5eed,
    }
}

/// Which parts of the model the scalar objective touches.
#[derive(Clone, Copy, Debug)]
pub enum Objective {
    /// Weighted sum of the token outputs plus the pooled output.
    Hidden,
    Mlm,
    Classification,
    Regression,
    Contrastive,
    /// Sum of all of the above.
    All,
}

pub fn objective(case: &GradCase, which: Objective, g: &mut Graph, p: &Bound) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(case.dropout_seed);
    let out = encode(g, p, &case.cfg, &case.batch, Some(&mut rng))?;
    let mut parts = Vec::new();
    let want =
        |o: Objective| matches!(which, Objective::All) || std::mem::discriminant(&which) == std::mem::discriminant(&o);
    if want(Objective::Hidden) {
        let w = g.constant(case.weights.clone());
        // Weights are N(0, 1/numel) so the objective stays O(1).
        let wt = g.mul(out.tokens, w)?;
        parts.push(g.sum(wt)?);
        parts.push(g.sum(out.pooled)?);
    }
    if want(Objective::Mlm) {
        let rows = g.gather_rows(out.tokens, &case.mlm_rows)?;
        let logits = mlm_logits(g, p, rows)?;
        parts.push(g.cross_entropy(logits, &case.mlm_targets)?);
    }
    if want(Objective::Classification) {
        let y = task_head(g, p, out.pooled, &case.class_task)?;
        let t: Vec<usize> = (0..case.batch.len())
            .map(|i| i % case.class_task.label_kind.output_dim())
            .collect();
        parts.push(g.cross_entropy(y, &t)?);
    }
    if want(Objective::Regression) {
        // A one-column view of the classification head serves as the
        // regression head.
        let y = task_head(g, p, out.pooled, &case.class_task)?;
        let y = g.block(y, 0, case.batch.len(), 0, 1)?;
        let t = g.constant(Tensor::matrix(
            case.batch.len(),
            1,
            (0..case.batch.len()).map(|i| i as f64).collect(),
        )?);
        let d = g.sub(y, t)?;
        let sq = g.mul(d, d)?;
        parts.push(g.mean(sq)?);
    }
    if want(Objective::Contrastive) {
        let z = project(g, p, out.pooled)?;
        let origins: Vec<u64> = (0..case.batch.len() as u64).collect();
        parts.push(batch_contrastive_loss(g, z, &case.keys, &origins, &case.queue, 0.5)?);
    }
    let mut total = parts[0];
    for &v in &parts[1..] {
        total = g.add(total, v)?;
    }
    Ok(total)
}
