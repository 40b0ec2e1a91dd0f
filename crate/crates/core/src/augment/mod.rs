//! Sentence augmentation: back-translation through pivot languages and
//! easy data augmentation (EDA) edits.

mod eda;
mod lexicon;
mod pairs;
mod translate;

pub use eda::{eda_apply, eda_augment, edit_count, EdaOp};
pub use lexicon::{is_stopword, Lexicon, STOPWORDS};
pub use pairs::{make_pairs, read_augmented, write_augmented, AugmentConfig, AugmentMethod, AugmentedPair};
pub use translate::{back_translate, HttpTranslator, HttpTranslatorConfig, MockTranslator, Translator, SOURCE_LANG};
