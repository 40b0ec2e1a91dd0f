//! Task descriptions and labelled rows for GLUE-style benchmarks.

use serde::{Deserialize, Serialize};

use crate::error::{CertError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputArity {
    Single,
    Pair,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum LabelKind {
    Binary,
    Multiclass { classes: usize },
    Regression { lo: f64, hi: f64 },
}

impl LabelKind {
    /// Width of the task head.
    pub fn output_dim(&self) -> usize {
        match self {
            LabelKind::Binary => 2,
            LabelKind::Multiclass { classes } => *classes,
            LabelKind::Regression { .. } => 1,
        }
    }

    pub fn is_regression(&self) -> bool {
        matches!(self, LabelKind::Regression { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Accuracy,
    F1,
    Mcc,
    Pearson,
    Spearman,
}

impl MetricName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricName::Accuracy => "accuracy",
            MetricName::F1 => "f1",
            MetricName::Mcc => "mcc",
            MetricName::Pearson => "pearson",
            MetricName::Spearman => "spearman",
        }
    }
}

/// Describes one benchmark task: inputs, label space, and metrics.
///
/// Classification labels are given as strings in the data files and mapped
/// to class ids by their position in `label_values`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub input_arity: InputArity,
    pub label_kind: LabelKind,
    /// The first metric is the one used for model selection.
    pub metric_set: Vec<MetricName>,
    #[serde(default)]
    pub label_values: Vec<String>,
}

/// Published split sizes (train, dev, test) of the GLUE tasks.
pub const GLUE_SPLIT_SIZES: &[(&str, usize, usize, usize)] = &[
    ("cola", 8551, 1043, 1064),
    ("rte", 2491, 278, 2985),
    ("qnli", 104742, 5462, 5462),
    ("stsb", 5749, 1500, 1379),
    ("mrpc", 3668, 408, 1725),
    ("wnli", 636, 72, 147),
    ("sst2", 67350, 873, 1821),
    ("mnli-m", 392702, 9815, 9796),
    ("mnli-mm", 392702, 9832, 9847),
    ("qqp", 363871, 40432, 390965),
];

/// Finetuning learning rate and epoch count recommended per task.
pub fn finetune_defaults(task: &str) -> Option<(f64, usize)> {
    Some(match task {
        "cola" => (3e-5, 20),
        "mnli" | "mnli-m" | "mnli-mm" => (3e-5, 3),
        "stsb" => (3e-5, 10),
        "rte" => (2e-5, 5),
        "qnli" => (2e-5, 3),
        "mrpc" => (2e-5, 15),
        "sst2" => (2e-5, 4),
        "wnli" => (2e-5, 5),
        "qqp" => (1e-5, 5),
        _ => return None,
    })
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.metric_set.is_empty() {
            return Err(CertError::Config(format!("task `{}` has no metrics", self.name)));
        }
        match self.label_kind {
            LabelKind::Regression { lo, hi } => {
                if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
                    return Err(CertError::Config(format!(
                        "task `{}` regression range [{lo}, {hi}] is empty",
                        self.name
                    )));
                }
                if self
                    .metric_set
                    .iter()
                    .any(|m| !matches!(m, MetricName::Pearson | MetricName::Spearman))
                {
                    return Err(CertError::Config(format!(
                        "regression task `{}` only supports pearson/spearman",
                        self.name
                    )));
                }
            }
            kind => {
                if self.label_values.len() != kind.output_dim() {
                    return Err(CertError::Config(format!(
                        "task `{}` declares {} classes but {} label values",
                        self.name,
                        kind.output_dim(),
                        self.label_values.len()
                    )));
                }
                if self
                    .metric_set
                    .iter()
                    .any(|m| matches!(m, MetricName::Pearson | MetricName::Spearman))
                {
                    return Err(CertError::Config(format!(
                        "classification task `{}` cannot use correlation metrics",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Built-in GLUE task definitions by lowercase name.
    pub fn preset(name: &str) -> Option<TaskSpec> {
        use InputArity::*;
        use MetricName::*;
        let binary01 = || vec!["0".to_string(), "1".to_string()];
        let entail = || vec!["entailment".to_string(), "not_entailment".to_string()];
        let (arity, kind, metrics, labels) = match name {
            "cola" => (Single, LabelKind::Binary, vec![Mcc, Accuracy], binary01()),
            "sst2" => (Single, LabelKind::Binary, vec![Accuracy], binary01()),
            "mrpc" | "qqp" => (Pair, LabelKind::Binary, vec![Accuracy, F1], binary01()),
            "stsb" => (
                Pair,
                LabelKind::Regression { lo: 1.0, hi: 5.0 },
                vec![Pearson, Spearman],
                Vec::new(),
            ),
            "mnli" | "mnli-m" | "mnli-mm" => (
                Pair,
                LabelKind::Multiclass { classes: 3 },
                vec![Accuracy],
                vec![
                    "contradiction".to_string(),
                    "entailment".to_string(),
                    "neutral".to_string(),
                ],
            ),
            "qnli" | "rte" => (Pair, LabelKind::Binary, vec![Accuracy], entail()),
            "wnli" => (Pair, LabelKind::Binary, vec![Accuracy], binary01()),
            _ => return None,
        };
        Some(TaskSpec {
            name: name.to_string(),
            input_arity: arity,
            label_kind: kind,
            metric_set: metrics,
            label_values: labels,
        })
    }

    /// Maps a raw label string onto a [`Label`].
    pub fn parse_label(&self, raw: &str) -> Result<Label> {
        match self.label_kind {
            LabelKind::Regression { .. } => raw
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Label::Real)
                .ok_or_else(|| CertError::InvalidInput(format!("label `{raw}` is not a real number"))),
            _ => self
                .label_values
                .iter()
                .position(|v| v == raw.trim())
                .map(Label::Class)
                .ok_or_else(|| CertError::InvalidInput(format!("label `{raw}` is not one of {:?}", self.label_values))),
        }
    }

    pub fn label_to_string(&self, label: &Label) -> String {
        match label {
            Label::Class(c) => self.label_values.get(*c).cloned().unwrap_or_else(|| c.to_string()),
            Label::Real(v) => format!("{v}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Label {
    Class(usize),
    Real(f64),
}

/// One row of task data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub guid: String,
    pub text_a: String,
    pub text_b: Option<String>,
    pub label: Option<Label>,
}

impl Example {
    pub fn single(guid: impl Into<String>, text: impl Into<String>, label: Option<Label>) -> Self {
        Example {
            guid: guid.into(),
            text_a: text.into(),
            text_b: None,
            label,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for (name, ..) in GLUE_SPLIT_SIZES {
            let spec = TaskSpec::preset(name).unwrap();
            spec.validate().unwrap();
            assert!(finetune_defaults(name).is_some());
        }
        let stsb = TaskSpec::preset("stsb").unwrap();
        assert_eq!(stsb.label_kind, LabelKind::Regression { lo: 1.0, hi: 5.0 });
        assert_eq!(stsb.metric_set, vec![MetricName::Pearson, MetricName::Spearman]);
    }

    #[test]
    fn label_parsing() {
        let rte = TaskSpec::preset("rte").unwrap();
        assert_eq!(rte.parse_label("not_entailment").unwrap(), Label::Class(1));
        let err = rte.parse_label("maybe").unwrap_err();
        assert!(err.to_string().contains("maybe"));
        let stsb = TaskSpec::preset("stsb").unwrap();
        assert_eq!(stsb.parse_label("3.2").unwrap(), Label::Real(3.2));
        assert!(stsb.parse_label("high").is_err());
    }

    #[test]
    fn empty_metric_set_rejected() {
        let mut t = TaskSpec::preset("sst2").unwrap();
        t.metric_set.clear();
        assert!(t.validate().is_err());
    }
}
