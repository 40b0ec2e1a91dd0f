//! SGD with momentum, coupled weight decay, and learning-rate schedules.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::params::{GradMap, ParamSet};
use crate::error::{CertError, Result};

/// Velocity buffers and hyperparameters of the momentum solver.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    velocity: IndexMap<String, Vec<f64>>,
    pub momentum_coeff: f64,
    pub weight_decay: f64,
    pub base_lr: f64,
}

impl OptimizerState {
    /// Zero velocities shaped like `params`.
    pub fn new(params: &ParamSet, momentum_coeff: f64, weight_decay: f64, base_lr: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum_coeff) {
            return Err(CertError::Config(format!(
                "momentum coefficient must lie in [0, 1), got {momentum_coeff}"
            )));
        }
        if weight_decay < 0.0 || !weight_decay.is_finite() {
            return Err(CertError::Config(format!(
                "weight decay must be nonnegative, got {weight_decay}"
            )));
        }
        if base_lr <= 0.0 || !base_lr.is_finite() {
            return Err(CertError::Config(format!(
                "base learning rate must be positive, got {base_lr}"
            )));
        }
        let velocity = params
            .iter()
            .map(|(k, v)| (k.to_string(), vec![0.0; v.numel()]))
            .collect();
        Ok(OptimizerState {
            velocity,
            momentum_coeff,
            weight_decay,
            base_lr,
        })
    }

    pub fn velocity(&self, name: &str) -> Option<&[f64]> {
        self.velocity.get(name).map(Vec::as_slice)
    }
}

/// One momentum step: `v ← μ·v + (g + λ·θ)`, `θ ← θ − lr·v`.
///
/// Parameters absent from `grads` are left untouched (their velocity too).
pub fn sgd_step(params: &mut ParamSet, grads: &GradMap, state: &mut OptimizerState, lr: f64) -> Result<()> {
    if lr <= 0.0 || !lr.is_finite() {
        return Err(CertError::Config(format!("learning rate must be positive, got {lr}")));
    }
    for (name, g) in grads {
        let theta = params
            .get_mut(name)
            .ok_or_else(|| CertError::Shape(format!("gradient for unknown parameter `{name}`")))?;
        if theta.shape() != g.shape() {
            return Err(CertError::Shape(format!(
                "gradient for `{name}` has shape {:?}, parameter has {:?}",
                g.shape(),
                theta.shape()
            )));
        }
        if !g.is_finite() {
            return Err(CertError::NonFinite(format!("gradient of `{name}`")));
        }
        let v = state
            .velocity
            .get_mut(name)
            .ok_or_else(|| CertError::Shape(format!("no velocity buffer for `{name}`")))?;
        if v.len() != g.numel() {
            return Err(CertError::Shape(format!(
                "velocity for `{name}` has {} entries, gradient has {}",
                v.len(),
                g.numel()
            )));
        }
        let mu = state.momentum_coeff;
        let wd = state.weight_decay;
        for ((t, vi), &gi) in theta.data_mut().iter_mut().zip(v.iter_mut()).zip(g.data()) {
            *vi = mu * *vi + (gi + wd * *t);
            *t -= lr * *vi;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[default]
    Cosine,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub base_lr: f64,
    pub total_steps: usize,
    pub kind: ScheduleKind,
}

/// Learning rate after `step` optimizer steps. Steps past the end clamp to
/// the final value.
pub fn lr_at(step: usize, cfg: &ScheduleConfig) -> f64 {
    match cfg.kind {
        ScheduleKind::Constant => cfg.base_lr,
        ScheduleKind::Cosine => {
            let total = cfg.total_steps.max(1);
            let s = step.min(total) as f64;
            cfg.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * s / total as f64).cos())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    fn single(theta: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::vector(vec![theta]).unwrap());
        p
    }

    fn grad(g: f64) -> GradMap {
        let mut m = GradMap::new();
        m.insert("w".into(), Tensor::vector(vec![g]).unwrap());
        m
    }

    #[test]
    fn plain_sgd_step() {
        let mut p = single(1.0);
        let mut st = OptimizerState::new(&p, 0.0, 0.0, 0.1).unwrap();
        sgd_step(&mut p, &grad(0.5), &mut st, 0.1).unwrap();
        assert!((p.get("w").unwrap().item() - 0.95).abs() < 1e-15);
    }

    #[test]
    fn momentum_recurrence() {
        let mut p = single(0.0);
        let mut st = OptimizerState::new(&p, 0.9, 0.0, 1.0).unwrap();
        sgd_step(&mut p, &grad(1.0), &mut st, 1.0).unwrap();
        assert_eq!(p.get("w").unwrap().item(), -1.0);
        sgd_step(&mut p, &grad(1.0), &mut st, 1.0).unwrap();
        assert!((st.velocity("w").unwrap()[0] - 1.9).abs() < 1e-15);
        assert!((p.get("w").unwrap().item() - (-2.9)).abs() < 1e-15);
    }

    #[test]
    fn decay_only_step() {
        let mut p = single(1000.0);
        let mut st = OptimizerState::new(&p, 0.0, 1e-5, 1.0).unwrap();
        sgd_step(&mut p, &grad(0.0), &mut st, 1.0).unwrap();
        assert!((p.get("w").unwrap().item() - 999.99).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_gradients() {
        let mut p = single(1.0);
        let mut st = OptimizerState::new(&p, 0.0, 0.0, 0.1).unwrap();
        let err = sgd_step(&mut p, &grad(f64::NAN), &mut st, 0.1).unwrap_err();
        assert!(err.to_string().contains("`w`"));

        let mut wrong = GradMap::new();
        wrong.insert("w".into(), Tensor::vector(vec![1.0, 2.0]).unwrap());
        assert!(matches!(
            sgd_step(&mut p, &wrong, &mut st, 0.1),
            Err(CertError::Shape(_))
        ));
    }

    #[test]
    fn cosine_anchor_points() {
        let cfg = ScheduleConfig {
            base_lr: 0.4,
            total_steps: 100,
            kind: ScheduleKind::Cosine,
        };
        assert_eq!(lr_at(0, &cfg), 0.4);
        assert!(lr_at(100, &cfg).abs() < 1e-15);
        assert!((lr_at(50, &cfg) - 0.2).abs() < 1e-15);
        assert_eq!(lr_at(500, &cfg), lr_at(100, &cfg));
    }
}
