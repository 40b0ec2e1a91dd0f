use super::task::Example;
use super::tokenizer::Tokenizer;
use super::vocab::{Vocabulary, CLS, PAD, SEP};
use crate::error::{CertError, Result};

/// Fixed-length model input: `[CLS] a.. [SEP] (b.. [SEP])` then `[PAD]`s.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    /// 1 for real tokens, 0 for padding.
    pub mask: Vec<u8>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }
}

/// Trims the longer side one token at a time (ties trim `b`) until the pair
/// fits in `budget` tokens.
fn truncate_pair(a: &mut Vec<usize>, b: &mut Vec<usize>, budget: usize) {
    while a.len() + b.len() > budget {
        if a.len() > b.len() {
            a.pop();
        } else {
            b.pop();
        }
    }
}

pub fn encode_ids(a: &[usize], b: Option<&[usize]>, max_len: usize) -> Result<TokenSequence> {
    if max_len < 3 {
        return Err(CertError::Config(format!("max_len must be at least 3, got {max_len}")));
    }
    let mut a = a.to_vec();
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS);
    match b {
        Some(b) => {
            let mut b = b.to_vec();
            truncate_pair(&mut a, &mut b, max_len - 3);
            ids.extend(&a);
            ids.push(SEP);
            ids.extend(&b);
            ids.push(SEP);
        }
        None => {
            a.truncate(max_len - 2);
            ids.extend(&a);
            ids.push(SEP);
        }
    }
    let real = ids.len();
    ids.resize(max_len, PAD);
    let mut mask = vec![1u8; real];
    mask.resize(max_len, 0);
    Ok(TokenSequence { ids, mask })
}

pub fn encode_text<T: Tokenizer + ?Sized>(
    text_a: &str,
    text_b: Option<&str>,
    vocab: &Vocabulary,
    tokenizer: &T,
    max_len: usize,
) -> Result<TokenSequence> {
    let a = vocab.ids(&tokenizer.tokenize(text_a));
    let b = text_b.map(|t| vocab.ids(&tokenizer.tokenize(t)));
    encode_ids(&a, b.as_deref(), max_len)
}

pub fn encode_example<T: Tokenizer + ?Sized>(
    ex: &Example,
    vocab: &Vocabulary,
    tokenizer: &T,
    max_len: usize,
) -> Result<TokenSequence> {
    encode_text(&ex.text_a, ex.text_b.as_deref(), vocab, tokenizer, max_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{BasicTokenizer, NUM_SPECIAL};
    use proptest::prelude::*;

    #[test]
    fn single_sentence_layout() {
        let vocab = Vocabulary::build(&["x"], 1, &BasicTokenizer).unwrap();
        let ex = Example::single("0", "x", None);
        let seq = encode_example(&ex, &vocab, &BasicTokenizer, 5).unwrap();
        assert_eq!(seq.ids, vec![CLS, vocab.id("x"), SEP, PAD, PAD]);
        assert_eq!(seq.mask, vec![1, 1, 1, 0, 0]);
    }

    #[test]
    fn pair_truncation_trims_longer_first() {
        let a: Vec<usize> = (10..20).collect();
        let b: Vec<usize> = (30..40).collect();
        let seq = encode_ids(&a, Some(&b), 12).unwrap();
        assert_eq!(seq.real_len(), 12);
        let first_sep = seq.ids.iter().position(|&i| i == SEP).unwrap();
        let a_kept = first_sep - 1;
        let b_kept = 12 - 3 - a_kept;
        assert_eq!(a_kept + b_kept, 9);
        assert!(a_kept.abs_diff(b_kept) <= 1);
        assert_eq!(&seq.ids[1..=a_kept], &a[..a_kept]);

        // Uneven lengths: only the long side shrinks.
        let short: Vec<usize> = vec![50, 51];
        let seq = encode_ids(&a, Some(&short), 10).unwrap();
        assert_eq!(&seq.ids[..], &[CLS, 10, 11, 12, 13, 14, SEP, 50, 51, SEP]);
    }

    #[test]
    fn rejects_tiny_max_len() {
        assert!(encode_ids(&[7], None, 2).is_err());
    }

    proptest! {
        // mask sum equals the count of non-PAD ids, and length is exact
        #[test]
        fn mask_matches_real_tokens(
            a in proptest::collection::vec(NUM_SPECIAL..60usize, 0..40),
            b in proptest::option::of(proptest::collection::vec(NUM_SPECIAL..60usize, 0..40)),
            max_len in 3usize..48,
        ) {
            let seq = encode_ids(&a, b.as_deref(), max_len).unwrap();
            prop_assert_eq!(seq.ids.len(), max_len);
            let non_pad = seq.ids.iter().filter(|&&i| i != PAD).count();
            let mask_sum: usize = seq.mask.iter().map(|&m| m as usize).sum();
            prop_assert_eq!(non_pad, mask_sum);
            prop_assert_eq!(seq.ids[0], CLS);
            prop_assert_eq!(seq.ids[mask_sum - 1], SEP);
        }
    }
}
