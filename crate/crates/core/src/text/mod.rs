//! Tokenization, vocabularies, task definitions, and task-file ingestion.

mod encode;
mod task;
mod tokenizer;
mod tsv;
mod vocab;

pub use encode::{encode_example, encode_ids, encode_text, TokenSequence};
pub use task::{finetune_defaults, Example, InputArity, Label, LabelKind, MetricName, TaskSpec, GLUE_SPLIT_SIZES};
pub use tokenizer::{tokenize, BasicTokenizer, Tokenizer};
pub use tsv::{load_corpus, load_tsv, load_unlabeled_texts, Split, LABEL_COLUMN};
pub use vocab::{Vocabulary, CLS, MASK, NUM_SPECIAL, PAD, SEP, SPECIAL_TOKENS, UNK};
