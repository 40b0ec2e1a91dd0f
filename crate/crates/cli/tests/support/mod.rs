#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cert_core::synthetic::{template_task, two_template_corpus};
use cert_core::text::{Example, Label};

/// Files of a small synthetic experiment.
pub struct Workspace {
    pub dir: tempfile::TempDir,
    pub corpus: PathBuf,
    pub lexicon: PathBuf,
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
}

impl Workspace {
    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn join(&self, p: &str) -> PathBuf {
        self.dir.path().join(p)
    }

    /// `--set` overrides pointing the data section at these files.
    pub fn data_overrides(&self) -> Vec<String> {
        let p = |k: &str, v: &Path| format!("data.{k}=\"{}\"", v.display());
        vec![
            p("corpus", &self.corpus),
            p("lexicon", &self.lexicon),
            p("train", &self.train),
            p("dev", &self.dev),
            p("test", &self.test),
            "data.task=\"sst2\"".into(),
        ]
    }
}

fn write_task(path: &Path, rows: &[Example], with_label: bool) {
    let mut out = if with_label {
        "guid\ttext_a\tlabel\n".to_string()
    } else {
        "guid\ttext_a\n".to_string()
    };
    for e in rows {
        out.push_str(&format!("{}\t{}", e.guid, e.text_a));
        if with_label {
            let Some(Label::Class(k)) = e.label else {
                panic!("synthetic labels are classes")
            };
            out.push_str(&format!("\t{k}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

/// `corpus_size` unlabeled sentences, a lexicon, and a template task split
/// 40/30/30 with label noise `noise`.
pub fn workspace(corpus_size: usize, noise: f64) -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let c = two_template_corpus(corpus_size, 7);
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, c.sentences.join("\n") + "\n").unwrap();
    let lexicon = dir.path().join("lexicon.tsv");
    c.lexicon.save(&lexicon).unwrap();
    let task = template_task(100, noise, 11);
    let (train, dev, test) = (
        dir.path().join("train.tsv"),
        dir.path().join("dev.tsv"),
        dir.path().join("test.tsv"),
    );
    write_task(&train, &task[..40], true);
    write_task(&dev, &task[40..70], true);
    write_task(&test, &task[70..], false);
    Workspace {
        dir,
        corpus,
        lexicon,
        train,
        dev,
        test,
    }
}

/// Runs the CLI in-process with `args` after the program name.
pub fn cert(args: &[String]) -> i32 {
    let mut argv = vec!["cert".to_string()];
    argv.extend_from_slice(args);
    cert_cli::run(argv)
}

/// `subcommand --out out --set ...` with the workspace data keys plus `extra`.
pub fn args(ws: &Workspace, subcommand: &str, out: &Path, extra: &[&str]) -> Vec<String> {
    let mut a = vec![subcommand.to_string(), "--out".into(), out.display().to_string()];
    for o in ws.data_overrides() {
        a.push("--set".into());
        a.push(o);
    }
    a.extend(extra.iter().map(|s| s.to_string()));
    a
}
