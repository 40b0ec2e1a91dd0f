use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::tokenizer::Tokenizer;
use crate::error::{CertError, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
pub const MASK: usize = 4;

pub const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];
pub const NUM_SPECIAL: usize = SPECIAL_TOKENS.len();

/// Bijective token/id map with five fixed special ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    fn from_regular_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut vocab = Vocabulary {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
        };
        for t in SPECIAL_TOKENS.iter().map(|s| s.to_string()).chain(tokens) {
            if vocab.token_to_id.contains_key(&t) {
                return Err(CertError::InvalidInput(format!("duplicate vocabulary token `{t}`")));
            }
            vocab.token_to_id.insert(t.clone(), vocab.id_to_token.len());
            vocab.id_to_token.push(t);
        }
        Ok(vocab)
    }

    /// Only the special tokens.
    pub fn specials_only() -> Self {
        Vocabulary::from_regular_tokens(std::iter::empty()).expect("specials are distinct")
    }

    /// Every token occurring at least `min_count` times, most frequent first,
    /// ties broken lexicographically.
    pub fn build<T: Tokenizer + ?Sized>(corpus: &[impl AsRef<str>], min_count: usize, tokenizer: &T) -> Result<Self> {
        if min_count == 0 {
            return Err(CertError::Config("min_count must be at least 1".into()));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for line in corpus {
            for tok in tokenizer.tokenize(line.as_ref()) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count && !SPECIAL_TOKENS.contains(&t.as_str()))
            .collect();
        kept.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));
        Vocabulary::from_regular_tokens(kept.into_iter().map(|(t, _)| t))
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    /// Id of `token`, or `[UNK]`.
    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Non-special tokens in id order.
    pub fn regular_tokens(&self) -> &[String] {
        &self.id_to_token[NUM_SPECIAL..]
    }

    /// Hex SHA-256 over the full id-ordered token list.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.id_to_token {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// One regular token per line; line `i` (0-based) holds id `i + 5`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = String::new();
        for t in self.regular_tokens() {
            body.push_str(t);
            body.push('\n');
        }
        fs::write(path, body).map_err(|e| CertError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CertError::io(path, e))?;
        let mut tokens = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || line.chars().any(char::is_whitespace) {
                return Err(CertError::data(
                    path,
                    i as u64 + 1,
                    "vocabulary token is empty or contains whitespace",
                ));
            }
            tokens.push(line.to_string());
        }
        Vocabulary::from_regular_tokens(tokens).map_err(|e| CertError::data(path, 0, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::BasicTokenizer;

    #[test]
    fn frequency_order() {
        let v = Vocabulary::build(&["a a b"], 1, &BasicTokenizer).unwrap();
        assert_eq!(v.len(), NUM_SPECIAL + 2);
        assert!(v.id("a") < v.id("b"));
        assert_eq!(v.id("a"), NUM_SPECIAL);
    }

    #[test]
    fn threshold_maps_rare_to_unk() {
        let v = Vocabulary::build(&["a a b"], 2, &BasicTokenizer).unwrap();
        assert_eq!(v.len(), NUM_SPECIAL + 1);
        assert_eq!(v.id("b"), UNK);
    }

    #[test]
    fn lexicographic_tie_break() {
        let v = Vocabulary::build(&["zeta alpha mid"], 1, &BasicTokenizer).unwrap();
        assert_eq!(v.regular_tokens(), ["alpha", "mid", "zeta"]);
    }

    #[test]
    fn empty_corpus_gives_specials() {
        let v = Vocabulary::build::<BasicTokenizer>(&[] as &[&str], 1, &BasicTokenizer).unwrap();
        assert_eq!(v, Vocabulary::specials_only());
        assert_eq!(v.token(MASK), Some("[MASK]"));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::build(&["the cat sat on the mat ."], 1, &BasicTokenizer).unwrap();
        v.save(&path).unwrap();
        let back = Vocabulary::load(&path).unwrap();
        assert_eq!(v, back);
        assert_eq!(v.fingerprint(), back.fingerprint());
    }
}
