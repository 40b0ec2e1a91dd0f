use super::queue::MoCoQueue;
use crate::error::{CertError, Result};
use crate::numeric::{dot, log_sum_exp, Graph, Tensor, Var};

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(CertError::Config(format!("temperature must be positive, got {tau}")))
    }
}

/// `-log softmax(sims/τ)[positive]` over the given keys, with its gradient
/// with respect to `q`.
///
/// Similarities are plain dot products, which equal cosine similarity for
/// the unit vectors the encoder produces.
pub fn info_nce_with_grad(q: &[f64], keys: &[&[f64]], positive: usize, tau: f64) -> Result<(f64, Vec<f64>)> {
    check_tau(tau)?;
    if positive >= keys.len() {
        return Err(CertError::InvalidInput(format!(
            "positive index {positive} out of range for {} keys",
            keys.len()
        )));
    }
    if let Some(k) = keys.iter().find(|k| k.len() != q.len()) {
        return Err(CertError::Shape(format!(
            "key of width {} against query of width {}",
            k.len(),
            q.len()
        )));
    }
    let logits: Vec<f64> = keys.iter().map(|k| dot(q, k) / tau).collect();
    let lse = log_sum_exp(&logits);
    let loss = lse - logits[positive];
    let mut grad = vec![0.0; q.len()];
    for (j, (k, &l)) in keys.iter().zip(&logits).enumerate() {
        let coeff = ((l - lse).exp() - if j == positive { 1.0 } else { 0.0 }) / tau;
        for (g, &kv) in grad.iter_mut().zip(k.iter()) {
            *g += coeff * kv;
        }
    }
    Ok((loss, grad))
}

/// Contrastive loss of query `q` against every key in `queue`, where the
/// key at `positive_index` (oldest first) is the positive.
pub fn moco_loss(q: &[f64], queue: &MoCoQueue, positive_index: usize, tau: f64) -> Result<f64> {
    let keys: Vec<&[f64]> = queue.iter().map(|(_, k)| k).collect();
    info_nce_with_grad(q, &keys, positive_index, tau).map(|(l, _)| l)
}

/// In-batch variant: `z_j` is the positive for `z_i`, `negatives` the rest.
pub fn simclr_inbatch_loss(z_i: &[f64], z_j: &[f64], negatives: &[&[f64]], tau: f64) -> Result<f64> {
    let mut keys = Vec::with_capacity(negatives.len() + 1);
    keys.push(z_j);
    keys.extend_from_slice(negatives);
    info_nce_with_grad(z_i, &keys, 0, tau).map(|(l, _)| l)
}

/// Mean contrastive loss for a batch of queries recorded on `g`.
///
/// Row `i` scores query `i` against its own key (`positives` row `i`,
/// column 0 of the logits) and every queued key. Queue entries sharing the
/// query's origin are masked out so a sentence is never its own negative.
pub fn batch_contrastive_loss(
    g: &mut Graph,
    queries: Var,
    positives: &Tensor,
    origins: &[u64],
    queue: &MoCoQueue,
    tau: f64,
) -> Result<Var> {
    check_tau(tau)?;
    let shape = g.value(queries).shape().to_vec();
    if shape.len() != 2 || positives.shape() != shape.as_slice() || origins.len() != shape[0] {
        return Err(CertError::Shape(format!(
            "queries {:?}, positives {:?}, {} origins",
            shape,
            positives.shape(),
            origins.len()
        )));
    }
    let (b, d) = (shape[0], shape[1]);
    let pos = g.constant(positives.clone());
    let prod = g.mul(queries, pos)?;
    let ones = g.constant(Tensor::filled(&[d, 1], 1.0));
    let mut logits = g.matmul(prod, ones)?;
    if let Some(keys) = queue.keys_matrix() {
        let keys = g.constant(keys);
        let neg = g.matmul_bt(queries, keys)?;
        logits = g.concat_cols(&[logits, neg])?;
    }
    let logits = g.scale(logits, 1.0 / tau)?;
    let width = 1 + queue.len();
    let mut mask = vec![0.0; b * width];
    let mut any = false;
    for (i, &o) in origins.iter().enumerate() {
        for (j, (qo, _)) in queue.iter().enumerate() {
            if qo == o {
                mask[i * width + 1 + j] = f64::NEG_INFINITY;
                any = true;
            }
        }
    }
    let logits = if any {
        let m = g.constant(Tensor::matrix(b, width, mask)?);
        g.add(logits, m)?
    } else {
        logits
    };
    g.cross_entropy(logits, &vec![0; b])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors() {
        let mut q1 = MoCoQueue::new(1, 2).unwrap();
        q1.enqueue(&[1.0, 0.0], 0).unwrap();
        assert!(moco_loss(&[0.0, 1.0], &q1, 0, 0.07).unwrap().abs() < 1e-15);

        let (l, _) = info_nce_with_grad(
            &[0.0, 0.0],
            &[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0], &[0.0, -1.0]],
            2,
            0.5,
        )
        .unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);

        let (l, _) = info_nce_with_grad(&[1.0, 0.0], &[&[1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]], 0, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((l - ((e + 2.0) / e).ln()).abs() < 1e-12);
        assert!((l - 0.551445).abs() < 1e-6);
    }

    #[test]
    fn simclr_anchors() {
        assert_eq!(simclr_inbatch_loss(&[1.0, 0.0], &[0.0, 1.0], &[], 0.1).unwrap(), 0.0);
        let l = simclr_inbatch_loss(&[1.0, 0.0], &[0.0, 1.0], &[&[0.0, -1.0]], 0.1).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bad_inputs() {
        let mut q = MoCoQueue::new(2, 2).unwrap();
        q.enqueue(&[1.0, 0.0], 0).unwrap();
        assert!(moco_loss(&[1.0, 0.0], &q, 1, 0.1).is_err());
        assert!(moco_loss(&[1.0, 0.0], &q, 0, 0.0).is_err());
        assert!(moco_loss(&[1.0, 0.0], &q, 0, -1.0).is_err());
    }

    #[test]
    fn graph_route_matches_scalar_route() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut queue = MoCoQueue::new(4, 2).unwrap();
        queue.enqueue(&[0.0, 1.0], 10).unwrap();
        queue.enqueue(&[s, s], 11).unwrap();
        queue.enqueue(&[-1.0, 0.0], 12).unwrap();
        let q = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.6, 0.8]).unwrap();
        let k = Tensor::matrix(2, 2, vec![s, -s, 0.0, 1.0]).unwrap();
        let origins = [11u64, 99];
        let tau = 0.2;
        let mut g = Graph::new();
        let qv = g.param(q.clone());
        let loss = batch_contrastive_loss(&mut g, qv, &k, &origins, &queue, tau).unwrap();
        let grads = g.backward(loss).unwrap();

        // Query 0 has origin 11, so the second queued key is excluded.
        let (l0, g0) = info_nce_with_grad(q.row(0), &[k.row(0), &[0.0, 1.0], &[-1.0, 0.0]], 0, tau).unwrap();
        let (l1, g1) = info_nce_with_grad(q.row(1), &[k.row(1), &[0.0, 1.0], &[s, s], &[-1.0, 0.0]], 0, tau).unwrap();
        assert!((g.value(loss).item() - (l0 + l1) / 2.0).abs() < 1e-12);
        let gq = grads.get(qv).unwrap().data();
        for (a, b) in gq.iter().zip(g0.iter().chain(&g1)) {
            assert!((a - b / 2.0).abs() < 1e-12);
        }
    }
}
