use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::lexicon::{is_stopword, Lexicon};
use crate::error::{CertError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdaOp {
    SynonymReplacement,
    RandomInsertion,
    RandomSwap,
    RandomDeletion,
}

impl EdaOp {
    pub const ALL: [EdaOp; 4] = [
        EdaOp::SynonymReplacement,
        EdaOp::RandomInsertion,
        EdaOp::RandomSwap,
        EdaOp::RandomDeletion,
    ];
}

/// Number of edits for replacement, insertion and swap.
pub fn edit_count(alpha: f64, len: usize) -> usize {
    ((alpha * len as f64).round() as usize).max(1)
}

fn anchors(tokens: &[String], lexicon: &Lexicon) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in tokens {
        if !is_stopword(t) && !lexicon.synonyms(t).is_empty() && !out.contains(t) {
            out.push(t.clone());
        }
    }
    out
}

/// Applies one EDA operation chosen uniformly at random.
pub fn eda_augment(tokens: &[String], lexicon: &Lexicon, alpha: f64, rng: &mut impl Rng) -> Result<Vec<String>> {
    let op = *EdaOp::ALL.choose(rng).expect("non-empty");
    eda_apply(op, tokens, lexicon, alpha, rng)
}

/// Applies the given EDA operation.
///
/// Replacement picks `n` distinct non-stopword words that have synonyms and
/// rewrites every occurrence of each. Insertion adds a synonym of a random
/// anchor word at a random position, `n` times. Swap exchanges two distinct
/// positions `n` times. Deletion drops each token with probability `alpha`,
/// keeping one random token if all would go.
pub fn eda_apply(
    op: EdaOp,
    tokens: &[String],
    lexicon: &Lexicon,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<Vec<String>> {
    if tokens.is_empty() {
        return Err(CertError::InvalidInput("cannot augment an empty sentence".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CertError::Config(format!("EDA alpha must lie in [0, 1], got {alpha}")));
    }
    let n = edit_count(alpha, tokens.len());
    let mut out = tokens.to_vec();
    match op {
        EdaOp::SynonymReplacement => {
            let mut words = anchors(tokens, lexicon);
            words.shuffle(rng);
            for w in words.into_iter().take(n) {
                let syn = lexicon.synonyms(&w).choose(rng).expect("anchor has synonyms").clone();
                for t in out.iter_mut().filter(|t| **t == w) {
                    *t = syn.clone();
                }
            }
        }
        EdaOp::RandomInsertion => {
            for _ in 0..n {
                let words = anchors(&out, lexicon);
                let Some(w) = words.choose(rng) else { break };
                let syn = lexicon.synonyms(w).choose(rng).expect("anchor has synonyms").clone();
                let pos = rng.random_range(0..=out.len());
                out.insert(pos, syn);
            }
        }
        EdaOp::RandomSwap => {
            if out.len() >= 2 {
                for _ in 0..n {
                    let i = rng.random_range(0..out.len());
                    let mut j = rng.random_range(0..out.len() - 1);
                    if j >= i {
                        j += 1;
                    }
                    out.swap(i, j);
                }
            }
        }
        EdaOp::RandomDeletion => {
            out.retain(|_| !rng.random_bool(alpha));
            if out.is_empty() {
                out.push(tokens.choose(rng).expect("non-empty").clone());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(String::from).collect()
    }

    fn lex() -> Lexicon {
        let mut l = Lexicon::new();
        l.insert("quick", &["fast"]);
        l.insert("dog", &["hound"]);
        l.insert("the", &["thee"]);
        l
    }

    #[test]
    fn edit_counts() {
        assert_eq!(edit_count(0.1, 3), 1);
        assert_eq!(edit_count(0.1, 20), 2);
        assert_eq!(edit_count(0.1, 25), 3);
        assert_eq!(edit_count(0.0, 25), 1);
    }

    #[test]
    fn two_token_swap_reverses() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = eda_apply(EdaOp::RandomSwap, &toks("a b"), &Lexicon::new(), 0.1, &mut rng).unwrap();
        assert_eq!(out, toks("b a"));
    }

    #[test]
    fn replacement_skips_stopwords() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let src = toks("the quick dog saw the quick cat");
        let out = eda_apply(EdaOp::SynonymReplacement, &src, &lex(), 0.3, &mut rng).unwrap();
        // n = round(2.1) = 2 covers both anchors.
        assert_eq!(out, toks("the fast hound saw the fast cat"));
    }

    #[test]
    fn empty_lexicon_makes_replace_and_insert_noops() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let src = toks("the quick dog");
        for op in [EdaOp::SynonymReplacement, EdaOp::RandomInsertion] {
            assert_eq!(eda_apply(op, &src, &Lexicon::new(), 0.5, &mut rng).unwrap(), src);
        }
    }

    #[test]
    fn insertion_adds_a_synonym() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = toks("a quick cat");
        let out = eda_apply(EdaOp::RandomInsertion, &src, &lex(), 0.1, &mut rng).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.contains(&"fast".to_string()));
    }

    #[test]
    fn deletion_never_empties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let out = eda_apply(EdaOp::RandomDeletion, &toks("x y"), &Lexicon::new(), 1.0, &mut rng).unwrap();
            assert_eq!(out.len(), 1);
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(eda_augment(&[], &lex(), 0.1, &mut rng).is_err());
    }
}
