use crate::error::{CertError, Result};
use crate::numeric::ParamSet;

/// `θk ← m·θk + (1 − m)·θq` for every parameter, projection head included.
pub fn momentum_update(key: &mut ParamSet, query: &ParamSet, m: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&m) {
        return Err(CertError::Config(format!("momentum must lie in [0, 1], got {m}")));
    }
    key.check_same_layout(query)?;
    let keep = 1.0 - m;
    for ((_, k), (_, q)) in key.iter_mut().zip(query.iter()) {
        for (kv, &qv) in k.data_mut().iter_mut().zip(q.data()) {
            *kv = m * *kv + keep * qv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    fn set(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("a", Tensor::vector(vec![v; 3]).unwrap());
        p.insert("proj.b", Tensor::vector(vec![v]).unwrap());
        p
    }

    #[test]
    fn anchor_values() {
        let q = set(1.0);
        let mut k = set(0.0);
        momentum_update(&mut k, &q, 1.0).unwrap();
        assert_eq!(k, set(0.0));
        momentum_update(&mut k, &q, 0.999).unwrap();
        for (_, t) in k.iter() {
            for &v in t.data() {
                assert!((v - 0.001).abs() < 1e-15);
            }
        }
        momentum_update(&mut k, &q, 0.0).unwrap();
        assert_eq!(k, q);
    }

    #[test]
    fn layout_and_range_errors() {
        let q = set(1.0);
        let mut k = ParamSet::new();
        k.insert("a", Tensor::vector(vec![0.0; 2]).unwrap());
        assert!(momentum_update(&mut k, &q, 0.5).is_err());
        let mut k = set(0.0);
        assert!(momentum_update(&mut k, &q, 1.5).is_err());
    }
}
