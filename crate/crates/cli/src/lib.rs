//! The `cert` command: one subcommand per pipeline stage, driven by a TOML
//! config plus `--set key=value` overrides.
//!
//! Every run writes into its own directory (`--out`, or
//! `{output_root}/{stage}-{timestamp}-{seed}`) together with the resolved
//! config, so a run can be repeated from its outputs alone.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use cert_core::augment::{make_pairs, write_augmented, AugmentMethod, HttpTranslator, Lexicon, Translator};
use cert_core::encoder::{init_encoder, Checkpoint, CheckpointMeta};
use cert_core::metrics::MetricReport;
use cert_core::pipeline::{
    evaluate, finetune, predict, pretrain_cssl, pretrain_mlm, write_predictions, PairSource, PipelineConfig, Stage,
    TrainConfig,
};
use cert_core::rng::stream_rng;
use cert_core::text::{
    load_corpus, load_tsv, load_unlabeled_texts, BasicTokenizer, Split, TaskSpec, Vocabulary, LABEL_COLUMN,
};
use cert_core::{CertError, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.cert";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const AUGMENTED_FILE: &str = "augmented.tsv";
pub const CONFIG_FILE: &str = "config.toml";
pub const SEED_FILE: &str = "seed";
pub const LOG_FILE: &str = "log.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const PREDICTIONS_FILE: &str = "predictions.tsv";

#[derive(Parser, Debug)]
#[command(
    name = "cert",
    version,
    about = "Contrastive sentence pretraining and GLUE-style finetuning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set cssl.base_lr=1e-4` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; defaults to `{output_root}/{stage}-{timestamp}-{seed}`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the contents of an existing output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a vocabulary from the corpus, training texts and lexicon.
    BuildVocab(Common),
    /// Masked-token pretraining.
    PretrainMlm(Common),
    /// Write two augmented views of every corpus sentence.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["back_translation", "eda"])]
        method: Option<String>,
    },
    /// Momentum-contrast pretraining on augmented pairs.
    PretrainCssl {
        #[command(flatten)]
        common: Common,
        /// Start from a random encoder when no pretrained checkpoint is given.
        #[arg(long)]
        allow_random_init: bool,
    },
    /// Finetune on a labeled task with several restarts.
    Finetune(Common),
    /// Score a finetuned checkpoint on the dev split.
    Evaluate(Common),
    /// Write predictions of a finetuned checkpoint on the test split.
    Predict(Common),
}

/// Parses `argv` (program name first) and runs the command. Returns the
/// process exit status.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(dir) => {
            println!("outputs: {}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.category().exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<PathBuf> {
    match cmd {
        Command::BuildVocab(c) => build_vocab(&Run::start(Stage::BuildVocab, c, &[])?),
        Command::PretrainMlm(c) => pretrain_mlm_cmd(&Run::start(Stage::Mlm, c, &[])?),
        Command::Augment { common, method } => {
            let extra: Vec<String> = method.into_iter().map(|m| format!("augment.method={m}")).collect();
            augment_cmd(&Run::start(Stage::Augment, common, &extra)?)
        }
        Command::PretrainCssl {
            common,
            allow_random_init,
        } => pretrain_cssl_cmd(&Run::start(Stage::Cssl, common, &[])?, allow_random_init),
        Command::Finetune(c) => finetune_cmd(&Run::start(Stage::Finetune, c, &[])?),
        Command::Evaluate(c) => evaluate_cmd(&Run::start(Stage::Evaluate, c, &[])?),
        Command::Predict(c) => predict_cmd(&Run::start(Stage::Predict, c, &[])?),
    }
}

/// A resolved config and the directory this run writes into.
struct Run {
    cfg: PipelineConfig,
    dir: PathBuf,
}

impl Run {
    fn start(stage: Stage, common: Common, extra: &[String]) -> Result<Run> {
        let mut overrides = common.overrides;
        overrides.extend_from_slice(extra);
        let mut cfg = PipelineConfig::load(common.config.as_deref(), &overrides)?;
        cfg.stage = Some(stage);
        let dir = common.out.unwrap_or_else(|| {
            let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
            cfg.output_root.join(format!("{}-{stamp}-{}", stage.as_str(), cfg.seed))
        });
        if matches!(stage, Stage::BuildVocab | Stage::Mlm | Stage::Augment | Stage::Cssl) {
            guard_labels(&cfg)?;
        }
        prepare_dir(&dir, common.force)?;
        let toml = cfg.to_toml()?;
        write(&dir.join(CONFIG_FILE), &toml)?;
        write(&dir.join(SEED_FILE), &format!("{}\n", cfg.seed))?;
        info!("{} run in {}", stage.as_str(), dir.display());
        Ok(Run { cfg, dir })
    }

    fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn vocab(&self) -> Result<Vocabulary> {
        Vocabulary::load(self.cfg.data.require("vocab", &self.cfg.data.vocab)?)
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::load(self.cfg.data.require("checkpoint", &self.cfg.data.checkpoint)?)
    }

    fn task(&self) -> Result<TaskSpec> {
        let name = self
            .cfg
            .data
            .task
            .as_deref()
            .ok_or_else(|| CertError::Config("missing required key `data.task`".into()))?;
        TaskSpec::preset(&name.to_lowercase()).ok_or_else(|| CertError::Config(format!("unknown task `{name}`")))
    }
}

/// Refuses a non-empty directory unless `force`, in which case its
/// contents are removed so reruns leave no stale files behind.
fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).map_err(|e| CertError::io(dir, e))?;
        if entries.next().is_some() {
            if !force {
                return Err(CertError::Config(format!(
                    "output directory {} is not empty; pass --force to overwrite",
                    dir.display()
                )));
            }
            std::fs::remove_dir_all(dir).map_err(|e| CertError::io(dir, e))?;
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| CertError::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CertError::io(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CertError::Config(e.to_string()))?;
    write(path, &(text + "\n"))
}

/// Text for the unlabeled stages: the plain corpus if configured, else the
/// text columns of the training split. The label column is never read.
fn unlabeled_texts(cfg: &PipelineConfig) -> Result<Vec<String>> {
    guard_labels(cfg)?;
    let texts = match (&cfg.data.corpus, &cfg.data.train) {
        (Some(corpus), _) => load_corpus(corpus)?,
        (None, Some(train)) => load_unlabeled_texts(train, &cfg.data.text_columns)?,
        (None, None) => return Err(CertError::Config("set `data.corpus` or `data.train`".into())),
    };
    if texts.is_empty() {
        return Err(CertError::InvalidInput("the unlabeled corpus is empty".into()));
    }
    Ok(texts)
}

fn guard_labels(cfg: &PipelineConfig) -> Result<()> {
    if cfg.data.text_columns.iter().any(|c| c == LABEL_COLUMN) {
        return Err(CertError::LabelLeakage(format!(
            "`data.text_columns` names the `{LABEL_COLUMN}` column; unlabeled stages may not read labels"
        )));
    }
    Ok(())
}

fn lexicon(cfg: &PipelineConfig) -> Result<Lexicon> {
    match &cfg.data.lexicon {
        Some(p) => Lexicon::load(p),
        None => Ok(Lexicon::new()),
    }
}

fn build_vocab(run: &Run) -> Result<PathBuf> {
    let cfg = &run.cfg;
    let mut lines = unlabeled_texts(cfg)?;
    if cfg.data.corpus.is_some() {
        if let Some(train) = &cfg.data.train {
            lines.extend(load_unlabeled_texts(train, &cfg.data.text_columns)?);
        }
    }
    // Synonyms may enter sentences through EDA, so they need ids too.
    for (word, syns) in lexicon(cfg)?.iter() {
        lines.push(word.to_string());
        lines.extend(syns.iter().cloned());
    }
    let vocab = Vocabulary::build(&lines, cfg.data.min_count, &BasicTokenizer)?;
    vocab.save(&run.path(VOCAB_FILE))?;
    println!("vocabulary: {} tokens", vocab.len());
    Ok(run.dir.clone())
}

fn pretrain_mlm_cmd(run: &Run) -> Result<PathBuf> {
    let cfg = &run.cfg;
    let vocab = run.vocab()?;
    let corpus = unlabeled_texts(cfg)?;
    let init = cfg.data.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    let train = cfg.mlm.resolve(TrainConfig::mlm())?;
    let (ck, record) = pretrain_mlm(init.as_ref(), &corpus, &vocab, &cfg.encoder, &train, cfg.seed)?;
    ck.save(&run.path(CHECKPOINT_FILE))?;
    record.write(&run.path(LOG_FILE), &run.path(SUMMARY_FILE))?;
    println!("mlm: final loss {:.6}", record.final_metrics["loss"]);
    Ok(run.dir.clone())
}

fn augment_cmd(run: &Run) -> Result<PathBuf> {
    let cfg = &run.cfg;
    let corpus = unlabeled_texts(cfg)?;
    let lex = lexicon(cfg)?;
    let http;
    let translator: Option<&dyn Translator> = match cfg.augment.method {
        AugmentMethod::Eda => None,
        AugmentMethod::BackTranslation => {
            let tc = cfg.translator.clone().ok_or_else(|| {
                CertError::Config("back-translation needs a `[translator]` section (or use --method eda)".into())
            })?;
            http = HttpTranslator::new(tc)?;
            Some(&http)
        }
    };
    let pairs = make_pairs(&corpus, &cfg.augment, &lex, translator, cfg.seed)?;
    write_augmented(&run.path(AUGMENTED_FILE), &pairs)?;
    println!("augment: {} pairs", pairs.len());
    Ok(run.dir.clone())
}

fn pretrain_cssl_cmd(run: &Run, allow_random_init: bool) -> Result<PathBuf> {
    let cfg = &run.cfg;
    if cfg.data.checkpoint.is_none() && !allow_random_init {
        return Err(CertError::WorkflowOrder(
            "pretrain-cssl needs an MLM-pretrained encoder: run `cert pretrain-mlm` and set \
             `data.checkpoint`, or pass --allow-random-init"
                .into(),
        ));
    }
    let vocab = run.vocab()?;
    let init = match &cfg.data.checkpoint {
        Some(p) => Checkpoint::load(p)?,
        None => {
            let mut enc = cfg.encoder.clone();
            enc.vocab_size = vocab.len();
            let params = init_encoder(&enc, &mut stream_rng(cfg.seed, "cssl-random-init"))?;
            Checkpoint::new(enc, &vocab, CheckpointMeta::default(), params)
        }
    };
    let lex;
    let pairs;
    let corpus;
    let source = match &cfg.data.augmented {
        Some(p) => {
            pairs = cert_core::augment::read_augmented(p)?;
            PairSource::Fixed(&pairs)
        }
        None if cfg.augment.method == AugmentMethod::Eda => {
            corpus = unlabeled_texts(cfg)?;
            lex = lexicon(cfg)?;
            PairSource::Resampled {
                corpus: &corpus,
                augment: &cfg.augment,
                lexicon: &lex,
            }
        }
        None => {
            return Err(CertError::WorkflowOrder(
                "back-translated pairs must be produced first: run `cert augment` and set `data.augmented`".into(),
            ))
        }
    };
    let train = cfg.cssl.resolve(TrainConfig::cssl())?;
    let out = pretrain_cssl(&init, source, &vocab, &cfg.moco, &train, cfg.seed, allow_random_init)?;
    out.checkpoint.save(&run.path(CHECKPOINT_FILE))?;
    out.record.write(&run.path(LOG_FILE), &run.path(SUMMARY_FILE))?;
    println!("cssl: final loss {:.6}", out.record.final_metrics["loss"]);
    Ok(run.dir.clone())
}

fn finetune_cmd(run: &Run) -> Result<PathBuf> {
    let cfg = &run.cfg;
    let task = run.task()?;
    let vocab = run.vocab()?;
    let init = run.checkpoint()?;
    let train_set = load_tsv(cfg.data.require("train", &cfg.data.train)?, &task, Split::Train)?;
    let dev_set = load_tsv(cfg.data.require("dev", &cfg.data.dev)?, &task, Split::Dev)?;
    let train = cfg.finetune.resolve(TrainConfig::finetune(&task.name))?;
    let summary = finetune(&init, &task, &train_set, &dev_set, &vocab, &train, cfg.seed)?;
    let best = summary.best_restart();
    best.best.save(&run.path(CHECKPOINT_FILE))?;
    for (i, r) in summary.restarts.iter().enumerate() {
        r.record.write(
            &run.path(&format!("restart{i}.{LOG_FILE}")),
            &run.path(&format!("restart{i}.{SUMMARY_FILE}")),
        )?;
    }
    let report = serde_json::json!({
        "task": task.name,
        "metric": summary.metric,
        "median": summary.median,
        "best": summary.best,
        "restarts": summary.restarts.iter().map(|r| serde_json::json!({
            "seed": r.seed,
            "best_epoch": r.best_epoch,
            "best_metric": r.best_metric,
        })).collect::<Vec<_>>(),
    });
    write_json(&run.path(SUMMARY_FILE), &report)?;
    println!(
        "finetune {}: median {} {:.4}, best {:.4} (seed {})",
        task.name, summary.metric, summary.median, summary.best, best.seed
    );
    Ok(run.dir.clone())
}

fn evaluate_cmd(run: &Run) -> Result<PathBuf> {
    let cfg = &run.cfg;
    let ck = run.checkpoint()?;
    let vocab = run.vocab()?;
    let task = checkpoint_task(&ck, cfg)?;
    let dev = load_tsv(cfg.data.require("dev", &cfg.data.dev)?, &task, Split::Dev)?;
    let report: MetricReport = evaluate(&ck, &dev, &vocab)?;
    write_json(&run.path(METRICS_FILE), &report)?;
    for (name, value) in &report.values {
        println!("{name}\t{value:.6}");
    }
    println!("count\t{}", report.count);
    Ok(run.dir.clone())
}

fn predict_cmd(run: &Run) -> Result<PathBuf> {
    let cfg = &run.cfg;
    let ck = run.checkpoint()?;
    let vocab = run.vocab()?;
    let task = checkpoint_task(&ck, cfg)?;
    let test = load_tsv(cfg.data.require("test", &cfg.data.test)?, &task, Split::Test)?;
    let preds = predict(&ck, &test, &vocab)?;
    write_predictions(&run.path(PREDICTIONS_FILE), &task, &preds)?;
    println!("predict: {} rows", test.len());
    Ok(run.dir.clone())
}

/// The task the checkpoint head was trained for; a configured `data.task`
/// must agree with it.
fn checkpoint_task(ck: &Checkpoint, cfg: &PipelineConfig) -> Result<TaskSpec> {
    let task = ck
        .meta
        .task
        .clone()
        .ok_or_else(|| CertError::WorkflowOrder("checkpoint has no task head: run `cert finetune` first".into()))?;
    if let Some(name) = &cfg.data.task {
        if !name.eq_ignore_ascii_case(&task.name) {
            return Err(CertError::Config(format!(
                "`data.task` is `{name}` but the checkpoint was finetuned for `{}`",
                task.name
            )));
        }
    }
    Ok(task)
}
