use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eda::eda_augment;
use super::lexicon::Lexicon;
use super::translate::{back_translate, Translator};
use crate::error::{CertError, Result};
use crate::rng::item_rng;
use crate::text::{BasicTokenizer, Tokenizer};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMethod {
    #[default]
    BackTranslation,
    Eda,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub method: AugmentMethod,
    pub eda_alpha: f64,
    /// Pivot languages for the first and second view.
    pub pivots: [String; 2],
    /// Name of the RNG stream augmentation draws from.
    pub stream: String,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            method: AugmentMethod::BackTranslation,
            eda_alpha: 0.1,
            pivots: ["de".to_string(), "zh".to_string()],
            stream: "augment".to_string(),
        }
    }
}

/// Two augmentations of corpus sentence `origin_id`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugmentedPair {
    pub origin_id: u64,
    pub x_prime: String,
    pub x_double_prime: String,
}

/// Augments every sentence of `corpus` twice. Sentence `i` gets origin id
/// `i` and its own RNG derived from `(seed, i, stream)`, so the output does
/// not depend on corpus order or on other sentences.
pub fn make_pairs(
    corpus: &[String],
    cfg: &AugmentConfig,
    lexicon: &Lexicon,
    translator: Option<&dyn Translator>,
    seed: u64,
) -> Result<Vec<AugmentedPair>> {
    let tokenizer = BasicTokenizer;
    let translator = match (cfg.method, translator) {
        (AugmentMethod::BackTranslation, None) => {
            return Err(CertError::Config("back-translation requires a translator".into()))
        }
        (_, t) => t,
    };
    corpus
        .iter()
        .enumerate()
        .map(|(i, sentence)| {
            let origin_id = i as u64;
            let (x_prime, x_double_prime) = match cfg.method {
                AugmentMethod::BackTranslation => {
                    let t = translator.expect("checked above");
                    (
                        back_translate(sentence, t, &cfg.pivots[0])?,
                        back_translate(sentence, t, &cfg.pivots[1])?,
                    )
                }
                AugmentMethod::Eda => {
                    let tokens = tokenizer.tokenize(sentence);
                    let mut rng = item_rng(seed, origin_id, &cfg.stream);
                    let a = eda_augment(&tokens, lexicon, cfg.eda_alpha, &mut rng)
                        .map_err(|e| CertError::InvalidInput(format!("sentence {i}: {e}")))?;
                    let b = eda_augment(&tokens, lexicon, cfg.eda_alpha, &mut rng)?;
                    (tokenizer.detokenize(&a), tokenizer.detokenize(&b))
                }
            };
            Ok(AugmentedPair {
                origin_id,
                x_prime,
                x_double_prime,
            })
        })
        .collect()
}

/// Writes pairs as `origin_id<TAB>view<TAB>text`, views 1 and 2.
pub fn write_augmented(path: &Path, pairs: &[AugmentedPair]) -> Result<()> {
    let mut out = String::from("origin_id\tview\ttext\n");
    for p in pairs {
        for (view, text) in [(1, &p.x_prime), (2, &p.x_double_prime)] {
            if text.contains(['\t', '\n']) {
                return Err(CertError::InvalidInput(format!(
                    "augmented text of origin {} contains a tab or newline",
                    p.origin_id
                )));
            }
            out.push_str(&format!("{}\t{view}\t{text}\n", p.origin_id));
        }
    }
    std::fs::write(path, out).map_err(|e| CertError::io(path, e))
}

/// Reads a file written by [`write_augmented`]. Each origin must have
/// exactly one row per view.
pub fn read_augmented(path: &Path) -> Result<Vec<AugmentedPair>> {
    let text = std::fs::read_to_string(path).map_err(|e| CertError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == "origin_id\tview\ttext" => {}
        _ => return Err(CertError::data(path, 1, "expected header `origin_id\\tview\\ttext`")),
    }
    let mut views: indexmap::IndexMap<u64, [Option<String>; 2]> = indexmap::IndexMap::new();
    for (i, line) in lines {
        let line_no = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(3, '\t').collect();
        if fields.len() != 3 {
            return Err(CertError::data(
                path,
                line_no,
                format!("expected 3 columns, found {}", fields.len()),
            ));
        }
        let origin: u64 = fields[0]
            .parse()
            .map_err(|_| CertError::data(path, line_no, format!("bad origin id `{}`", fields[0])))?;
        let view = match fields[1] {
            "1" => 0,
            "2" => 1,
            v => {
                return Err(CertError::data(
                    path,
                    line_no,
                    format!("view must be 1 or 2, got `{v}`"),
                ))
            }
        };
        let slot = &mut views.entry(origin).or_default()[view];
        if slot.is_some() {
            return Err(CertError::data(
                path,
                line_no,
                format!("duplicate view {} for origin {origin}", view + 1),
            ));
        }
        *slot = Some(fields[2].to_string());
    }
    views
        .into_iter()
        .map(|(origin_id, [a, b])| match (a, b) {
            (Some(x_prime), Some(x_double_prime)) => Ok(AugmentedPair {
                origin_id,
                x_prime,
                x_double_prime,
            }),
            _ => Err(CertError::data(
                path,
                0,
                format!("origin {origin_id} lacks one of its two views"),
            )),
        })
        .collect()
}
