//! Declarative run configuration: one TOML file plus `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{AugmentConfig, HttpTranslatorConfig};
use crate::cssl::MoCoConfig;
use crate::encoder::EncoderConfig;
use crate::error::{CertError, Result};
use crate::numeric::ScheduleKind;
use crate::text::finetune_defaults;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    BuildVocab,
    Mlm,
    Augment,
    Cssl,
    Finetune,
    Evaluate,
    Predict,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::BuildVocab => "build-vocab",
            Stage::Mlm => "mlm",
            Stage::Augment => "augment",
            Stage::Cssl => "cssl",
            Stage::Finetune => "finetune",
            Stage::Evaluate => "evaluate",
            Stage::Predict => "predict",
        }
    }
}

/// Optimisation settings of one training stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub momentum_coeff: f64,
    pub schedule: ScheduleKind,
    /// Finetuning only.
    pub restart_count: usize,
}

impl TrainConfig {
    pub fn mlm() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 16,
            base_lr: 1e-4,
            weight_decay: 0.0,
            momentum_coeff: 0.9,
            schedule: ScheduleKind::Cosine,
            restart_count: 1,
        }
    }

    pub fn cssl() -> Self {
        TrainConfig {
            epochs: 100,
            base_lr: 4e-5,
            weight_decay: 1e-5,
            ..Self::mlm()
        }
    }

    /// Per-task learning rate and epoch count where known, else 2e-5 for 3
    /// epochs.
    pub fn finetune(task: &str) -> Self {
        let (base_lr, epochs) = finetune_defaults(task).unwrap_or((2e-5, 3));
        TrainConfig {
            epochs,
            base_lr,
            restart_count: 5,
            ..Self::mlm()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.restart_count == 0 {
            return Err(CertError::Config(format!(
                "epochs, batch_size and restart_count must be positive (got {}, {}, {})",
                self.epochs, self.batch_size, self.restart_count
            )));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(CertError::Config(format!(
                "base_lr must be positive, got {}",
                self.base_lr
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(CertError::Config(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if !(0.0..1.0).contains(&self.momentum_coeff) {
            return Err(CertError::Config(format!(
                "momentum_coeff must lie in [0, 1), got {}",
                self.momentum_coeff
            )));
        }
        Ok(())
    }
}

/// File-level view of [`TrainConfig`]: unset keys fall back to the stage
/// defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub base_lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub momentum_coeff: Option<f64>,
    pub schedule: Option<ScheduleKind>,
    pub restart_count: Option<usize>,
}

impl TrainOverrides {
    pub fn resolve(&self, base: TrainConfig) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs.unwrap_or(base.epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            base_lr: self.base_lr.unwrap_or(base.base_lr),
            weight_decay: self.weight_decay.unwrap_or(base.weight_decay),
            momentum_coeff: self.momentum_coeff.unwrap_or(base.momentum_coeff),
            schedule: self.schedule.unwrap_or(base.schedule),
            restart_count: self.restart_count.unwrap_or(base.restart_count),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Input and output locations. Relative paths resolve against the working
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Plain-text corpus, one sentence per line.
    pub corpus: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub min_count: usize,
    /// Synonym lexicon for EDA.
    pub lexicon: Option<PathBuf>,
    /// Augmented pairs read by the contrastive stage.
    pub augmented: Option<PathBuf>,
    /// Input checkpoint of the stage.
    pub checkpoint: Option<PathBuf>,
    /// Task preset name.
    pub task: Option<String>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Columns of the task files used as unlabeled text.
    pub text_columns: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            corpus: None,
            vocab: None,
            min_count: 1,
            lexicon: None,
            augmented: None,
            checkpoint: None,
            task: None,
            train: None,
            dev: None,
            test: None,
            text_columns: vec!["text_a".to_string()],
        }
    }
}

impl DataConfig {
    /// The path stored under `key`, or a config error naming the key.
    pub fn require<'a>(&self, key: &str, value: &'a Option<PathBuf>) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| CertError::Config(format!("missing required key `data.{key}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub stage: Option<Stage>,
    pub seed: u64,
    /// Parent of the per-run output directories.
    pub output_root: PathBuf,
    pub data: DataConfig,
    pub encoder: EncoderConfig,
    pub mlm: TrainOverrides,
    pub cssl: TrainOverrides,
    pub finetune: TrainOverrides,
    pub moco: MoCoConfig,
    pub augment: AugmentConfig,
    pub translator: Option<HttpTranslatorConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stage: None,
            seed: 42,
            output_root: PathBuf::from("runs"),
            data: DataConfig::default(),
            encoder: EncoderConfig::default(),
            mlm: TrainOverrides::default(),
            cssl: TrainOverrides::default(),
            finetune: TrainOverrides::default(),
            moco: MoCoConfig::default(),
            augment: AugmentConfig::default(),
            translator: None,
        }
    }
}

impl PipelineConfig {
    /// Reads `path` (if any) and applies `overrides` of the form
    /// `section.key=value`. Values are parsed as TOML, falling back to a
    /// bare string.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CertError::Config(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| CertError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CertError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CertError::Config(format!("cannot serialise config: {e}")))
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets the dotted key of `spec` (`a.b.c=value`) inside `table`.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CertError::Config(format!("override `{spec}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CertError::Config(format!("override `{spec}` has an empty key segment")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CertError::Config(format!("override `{spec}`: `{p}` is not a section")))?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let c = PipelineConfig::load(None, &[]).unwrap();
        assert_eq!(c.seed, 42);
        let cssl = c.cssl.resolve(TrainConfig::cssl()).unwrap();
        assert_eq!(
            (cssl.batch_size, cssl.base_lr, cssl.weight_decay, cssl.epochs),
            (16, 4e-5, 1e-5, 100)
        );
        let ft = c.finetune.resolve(TrainConfig::finetune("cola")).unwrap();
        assert_eq!((ft.base_lr, ft.epochs, ft.restart_count), (3e-5, 20, 5));
    }

    #[test]
    fn overrides_and_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 7\n[encoder]\nd_model = 32\n[data]\ntask = \"rte\"\n").unwrap();
        let c = PipelineConfig::load(
            Some(&path),
            &[
                "seed=9".into(),
                "cssl.base_lr=0.5".into(),
                "data.corpus=corpus.txt".into(),
                "augment.method=eda".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.encoder.d_model, 32);
        assert_eq!(c.cssl.base_lr, Some(0.5));
        assert_eq!(c.data.corpus, Some(PathBuf::from("corpus.txt")));
        assert_eq!(c.data.task.as_deref(), Some("rte"));
        let again = PipelineConfig::load(None, &[]).unwrap();
        assert_ne!(c, again);
    }

    #[test]
    fn errors_are_config_errors() {
        for bad in ["nokey", "seed.x=1", "encoder.bogus=1", "seed=\"abc\"", "=3"] {
            let err = PipelineConfig::load(None, &[bad.to_string()]).unwrap_err();
            assert!(matches!(err, CertError::Config(_)), "{bad}: {err}");
        }
        let ov = TrainOverrides {
            epochs: Some(0),
            ..TrainOverrides::default()
        };
        assert!(ov.resolve(TrainConfig::mlm()).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = PipelineConfig::load(None, &["data.task=sst2".into()]).unwrap();
        let text = c.to_toml().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, text).unwrap();
        assert_eq!(PipelineConfig::load(Some(&path), &[]).unwrap(), c);
    }
}
