mod support;

use std::path::Path;

use cert_cli::{AUGMENTED_FILE, CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE, PREDICTIONS_FILE, SEED_FILE, VOCAB_FILE};
use cert_core::augment::read_augmented;
use cert_core::metrics::MetricReport;
use support::{args, cert, workspace, Workspace};

const SMALL: &str = r#"
seed = 5

[encoder]
d_model = 16
n_heads = 2
n_layers = 1
d_ff = 32
max_seq_len = 12
d_proj = 8
init_std = 0.1

[mlm]
epochs = 2
base_lr = 0.01

[cssl]
epochs = 2
base_lr = 0.003
batch_size = 4

[moco]
queue_size = 16
temperature = 0.1
momentum = 0.99

[finetune]
epochs = 2
base_lr = 0.01
restart_count = 2
"#;

fn small_config(ws: &Workspace) -> String {
    let p = ws.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p.display().to_string()
}

fn with_config(ws: &Workspace, sub: &str, out: &Path, extra: &[&str]) -> Vec<String> {
    let cfg = small_config(ws);
    let mut a = args(ws, sub, out, extra);
    a.push("--config".into());
    a.push(cfg);
    a
}

fn set(key: &str, path: &Path) -> [String; 2] {
    ["--set".into(), format!("{key}=\"{}\"", path.display())]
}

#[test]
fn augment_eda_writes_one_pair_per_line() {
    let ws = workspace(10, 0.0);
    let out = ws.join("aug");
    assert_eq!(cert(&with_config(&ws, "augment", &out, &["--method", "eda"])), 0);
    let pairs = read_augmented(&out.join(AUGMENTED_FILE)).unwrap();
    assert_eq!(pairs.len(), 10);
    assert!(out.join(CONFIG_FILE).exists());
    assert_eq!(std::fs::read_to_string(out.join(SEED_FILE)).unwrap().trim(), "5");
}

#[test]
fn back_translation_without_translator_is_a_config_error() {
    let ws = workspace(10, 0.0);
    let out = ws.join("aug");
    assert_eq!(
        cert(&with_config(&ws, "augment", &out, &["--method", "back_translation"])),
        2
    );
}

#[test]
fn full_workflow_round_trips() {
    let ws = workspace(24, 0.0);
    let vocab_dir = ws.join("vocab");
    assert_eq!(cert(&with_config(&ws, "build-vocab", &vocab_dir, &[])), 0);
    let vocab = vocab_dir.join(VOCAB_FILE);

    let mlm = ws.join("mlm");
    let mut a = with_config(&ws, "pretrain-mlm", &mlm, &[]);
    a.extend(set("data.vocab", &vocab));
    assert_eq!(cert(&a), 0);

    let aug = ws.join("aug");
    assert_eq!(cert(&with_config(&ws, "augment", &aug, &["--method", "eda"])), 0);

    let cssl = ws.join("cssl");
    let mut a = with_config(&ws, "pretrain-cssl", &cssl, &[]);
    a.extend(set("data.vocab", &vocab));
    a.extend(set("data.checkpoint", &mlm.join(CHECKPOINT_FILE)));
    a.extend(set("data.augmented", &aug.join(AUGMENTED_FILE)));
    assert_eq!(cert(&a), 0);

    let ft = ws.join("ft");
    let mut a = with_config(&ws, "finetune", &ft, &[]);
    a.extend(set("data.vocab", &vocab));
    a.extend(set("data.checkpoint", &cssl.join(CHECKPOINT_FILE)));
    assert_eq!(cert(&a), 0);

    let ev = ws.join("eval");
    let mut a = with_config(&ws, "evaluate", &ev, &[]);
    a.extend(set("data.vocab", &vocab));
    a.extend(set("data.checkpoint", &ft.join(CHECKPOINT_FILE)));
    assert_eq!(cert(&a), 0);
    let text = std::fs::read_to_string(ev.join(METRICS_FILE)).unwrap();
    let report: MetricReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.count, 30);
    assert!((0.0..=1.0).contains(&report.values["accuracy"]));

    let pr = ws.join("pred");
    let mut a = with_config(&ws, "predict", &pr, &[]);
    a.extend(set("data.vocab", &vocab));
    a.extend(set("data.checkpoint", &ft.join(CHECKPOINT_FILE)));
    assert_eq!(cert(&a), 0);
    let preds = std::fs::read_to_string(pr.join(PREDICTIONS_FILE)).unwrap();
    assert_eq!(preds.lines().count(), 31);
}

#[test]
fn cssl_requires_a_pretrained_checkpoint() {
    let ws = workspace(24, 0.0);
    let vocab_dir = ws.join("vocab");
    assert_eq!(cert(&with_config(&ws, "build-vocab", &vocab_dir, &[])), 0);
    let mut a = with_config(
        &ws,
        "pretrain-cssl",
        &ws.join("cssl"),
        &["--set", "augment.method=\"eda\""],
    );
    a.extend(set("data.vocab", &vocab_dir.join(VOCAB_FILE)));
    assert_eq!(cert(&a), 2);

    let mut a = with_config(
        &ws,
        "pretrain-cssl",
        &ws.join("cssl-random"),
        &["--allow-random-init", "--set", "augment.method=\"eda\""],
    );
    a.extend(set("data.vocab", &vocab_dir.join(VOCAB_FILE)));
    assert_eq!(cert(&a), 0);
}

#[test]
fn unlabeled_stages_refuse_the_label_column() {
    let ws = workspace(24, 0.0);
    let out = ws.join("aug");
    let a = with_config(
        &ws,
        "augment",
        &out,
        &["--method", "eda", "--set", "data.text_columns=[\"text_a\",\"label\"]"],
    );
    assert_eq!(cert(&a), 2);
}

#[test]
fn existing_outputs_need_force_and_reruns_are_identical() {
    let ws = workspace(24, 0.0);
    let vocab_dir = ws.join("vocab");
    assert_eq!(cert(&with_config(&ws, "build-vocab", &vocab_dir, &[])), 0);
    let mlm = ws.join("mlm");
    let mut a = with_config(&ws, "pretrain-mlm", &mlm, &[]);
    a.extend(set("data.vocab", &vocab_dir.join(VOCAB_FILE)));
    assert_eq!(cert(&a), 0);
    let first = std::fs::read(mlm.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(cert(&a), 2);
    assert_eq!(std::fs::read(mlm.join(CHECKPOINT_FILE)).unwrap(), first);
    a.push("--force".into());
    assert_eq!(cert(&a), 0);
    assert_eq!(std::fs::read(mlm.join(CHECKPOINT_FILE)).unwrap(), first);
}

#[test]
fn bad_invocations_exit_with_config_status() {
    assert_eq!(cert(&["build-vocab".into(), "--no-such-flag".into()]), 2);
    assert_eq!(cert(&["no-such-command".into()]), 2);
    assert_eq!(
        cert(&["build-vocab".into(), "--set".into(), "encoder.bogus=1".into()]),
        2
    );
    let ws = workspace(10, 0.0);
    let a = args(
        &ws,
        "evaluate",
        &ws.join("eval"),
        &[
            "--set",
            "data.checkpoint=\"missing.cert\"",
            "--set",
            "data.vocab=\"missing.txt\"",
        ],
    );
    assert_eq!(cert(&a), 3);
}
