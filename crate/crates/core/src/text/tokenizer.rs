/// Splits raw text into tokens. Kept behind a trait so a subword scheme can
/// replace the default word-level splitter.
pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Vec<String>;

    fn detokenize(&self, tokens: &[String]) -> String {
        tokens.join(" ")
    }
}

/// Lowercases, splits on whitespace, and detaches ASCII punctuation into
/// single-character tokens.
#[derive(Clone, Copy, Debug, Default)]
pub struct BasicTokenizer;

impl Tokenizer for BasicTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut tokens = Vec::new();
        for word in text.split_whitespace() {
            let mut current = String::new();
            for ch in word.chars() {
                if ch.is_ascii_punctuation() {
                    if !current.is_empty() {
                        tokens.push(std::mem::take(&mut current));
                    }
                    tokens.push(ch.to_string());
                } else {
                    current.extend(ch.to_lowercase());
                }
            }
            if !current.is_empty() {
                tokens.push(current);
            }
        }
        tokens
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    BasicTokenizer.tokenize(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn detaches_punctuation() {
        assert_eq!(tokenize("Hello, world"), vec!["hello", ",", "world"]);
        assert_eq!(tokenize("don't stop!"), vec!["don", "'", "t", "stop", "!"]);
    }

    #[test]
    fn empty_and_blank_inputs() {
        assert!(tokenize("").is_empty());
        assert!(tokenize(" \t\n ").is_empty());
    }

    proptest! {
        #[test]
        fn round_trip_preserves_tokens(s in "[a-zA-Z ,.!?']{0,60}") {
            let toks = tokenize(&s);
            let again = tokenize(&BasicTokenizer.detokenize(&toks));
            let mut a = toks.clone();
            let mut b = again;
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }
}
