use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{CertError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    /// Learning rate at the last step of the epoch.
    pub lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_metric: Option<f64>,
}

/// What one training or evaluation run did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub stage: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub epochs: Vec<EpochLog>,
    pub final_metrics: IndexMap<String, f64>,
    pub wall_clock_secs: f64,
    pub checkpoint: Option<PathBuf>,
}

impl RunRecord {
    pub fn new(stage: &str, seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(RunRecord {
            stage: stage.to_string(),
            seed,
            config: serde_json::to_value(config)
                .map_err(|e| CertError::Config(format!("cannot snapshot config: {e}")))?,
            epochs: Vec::new(),
            final_metrics: IndexMap::new(),
            wall_clock_secs: 0.0,
            checkpoint: None,
        })
    }

    pub fn push_epoch(&mut self, log: EpochLog) -> Result<()> {
        if !log.loss.is_finite() {
            return Err(CertError::NonFinite(format!(
                "{} epoch {} loss is {}",
                self.stage, log.epoch, log.loss
            )));
        }
        self.epochs.push(log);
        Ok(())
    }

    pub fn finish(&mut self, started: Instant) {
        self.wall_clock_secs = started.elapsed().as_secs_f64();
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    /// Appends one JSON line per epoch to `log_path` and writes the whole
    /// record to `summary_path`.
    pub fn write(&self, log_path: &Path, summary_path: &Path) -> Result<()> {
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(log_path)
            .map_err(|e| CertError::io(log_path, e))?;
        for e in &self.epochs {
            let line = serde_json::json!({"stage": self.stage, "seed": self.seed, "epoch": e});
            writeln!(f, "{line}").map_err(|e| CertError::io(log_path, e))?;
        }
        let summary = serde_json::to_string_pretty(self).expect("record serialises");
        std::fs::write(summary_path, summary).map_err(|e| CertError::io(summary_path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_loss_and_writes_files() {
        let mut r = RunRecord::new("mlm", 1, &serde_json::json!({"a": 1})).unwrap();
        let log = |loss| EpochLog {
            epoch: 1,
            loss,
            lr: 0.1,
            dev_metric: None,
        };
        assert!(r.push_epoch(log(f64::NAN)).is_err());
        r.push_epoch(log(1.5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (l, s) = (dir.path().join("log.jsonl"), dir.path().join("summary.json"));
        r.write(&l, &s).unwrap();
        assert_eq!(std::fs::read_to_string(&l).unwrap().lines().count(), 1);
        let back: RunRecord = serde_json::from_str(&std::fs::read_to_string(&s).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
