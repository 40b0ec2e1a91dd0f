use std::path::Path;

use indexmap::IndexMap;

use crate::error::{CertError, Result};

/// Words never used as replacement or insertion anchors.
pub const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "has", "he", "her", "his", "i", "in", "is",
    "it", "its", "me", "my", "of", "on", "or", "our", "she", "so", "that", "the", "their", "them", "they", "this",
    "to", "was", "we", "were", "with", "you", "your",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(&token)
}

/// Token → synonyms map. A token is never listed as its own synonym.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lexicon {
    entries: IndexMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds synonyms for `token`, dropping `token` itself and duplicates.
    pub fn insert<S: AsRef<str>>(&mut self, token: &str, synonyms: &[S]) {
        let list = self.entries.entry(token.to_string()).or_default();
        for s in synonyms {
            let s = s.as_ref();
            if s != token && !list.iter().any(|x| x == s) {
                list.push(s.to_string());
            }
        }
        if list.is_empty() {
            self.entries.shift_remove(token);
        }
    }

    /// Synonyms of `token`; empty when it has none.
    pub fn synonyms(&self, token: &str) -> &[String] {
        self.entries.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Reads lines of `token<TAB>synonym<TAB>synonym...`. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CertError::io(path, e))?;
        let mut lex = Lexicon::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t').map(str::trim).filter(|f| !f.is_empty());
            let token = fields.next().expect("non-empty line has a field");
            let syns: Vec<&str> = fields.collect();
            if syns.is_empty() {
                return Err(CertError::data(
                    path,
                    i as u64 + 1,
                    format!("`{token}` lists no synonyms"),
                ));
            }
            lex.insert(token, &syns);
        }
        Ok(lex)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            for s in v {
                out.push('\t');
                out.push_str(s);
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| CertError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_synonyms_are_dropped() {
        let mut l = Lexicon::new();
        l.insert("big", &["big", "large", "large", "huge"]);
        l.insert("same", &["same"]);
        assert_eq!(l.synonyms("big"), &["large", "huge"]);
        assert!(l.synonyms("same").is_empty());
        assert_eq!(l.len(), 1);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lex.tsv");
        let mut l = Lexicon::new();
        l.insert("quick", &["fast", "rapid"]);
        l.insert("dog", &["hound"]);
        l.save(&path).unwrap();
        assert_eq!(Lexicon::load(&path).unwrap(), l);
        std::fs::write(&path, "lonely\n").unwrap();
        assert!(Lexicon::load(&path).is_err());
    }
}
