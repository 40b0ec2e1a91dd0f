//! Small generated corpora for tests, benchmarks and demos.
//!
//! Each template has its own content vocabulary, disjoint from the other
//! template's, and every content word has one synonym in the lexicon.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::augment::Lexicon;
use crate::rng::stream_rng;
use crate::text::{Example, Label};

const TEMPLATES: [&str; 2] = ["the {0} {1} likes the {2} near {3}", "we saw {0} {1} and {2} under {3}"];
const POOL: usize = 10;
const PREFIX: [&str; 2] = ["k", "z"];
const SLOT_LETTERS: [&str; 4] = ["a", "e", "o", "u"];

fn word(template: usize, slot: usize, i: usize) -> String {
    format!("{}{}{}", PREFIX[template], SLOT_LETTERS[slot], i)
}

fn synonym(w: &str) -> String {
    format!("{w}x")
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub sentences: Vec<String>,
    /// Template index (0 or 1) of each sentence.
    pub templates: Vec<usize>,
    pub lexicon: Lexicon,
}

/// Lexicon covering every content word of both templates.
pub fn lexicon() -> Lexicon {
    let mut lex = Lexicon::new();
    for t in 0..TEMPLATES.len() {
        for slot in 0..SLOT_LETTERS.len() {
            for i in 0..POOL {
                let w = word(t, slot, i);
                lex.insert(&w, &[synonym(&w)]);
            }
        }
    }
    lex
}

/// `n` distinct sentences alternating between the two templates.
pub fn two_template_corpus(n: usize, seed: u64) -> SyntheticCorpus {
    let mut rng = stream_rng(seed, "synthetic");
    let mut seen = HashSet::new();
    let mut sentences = Vec::with_capacity(n);
    let mut templates = Vec::with_capacity(n);
    let choices: Vec<usize> = (0..POOL).collect();
    while sentences.len() < n {
        let t = sentences.len() % TEMPLATES.len();
        let mut s = TEMPLATES[t].to_string();
        for slot in 0..SLOT_LETTERS.len() {
            let i = *choices.choose(&mut rng).expect("non-empty pool");
            s = s.replace(&format!("{{{slot}}}"), &word(t, slot, i));
        }
        if seen.insert(s.clone()) {
            sentences.push(s);
            templates.push(t);
        }
    }
    SyntheticCorpus {
        sentences,
        templates,
        lexicon: lexicon(),
    }
}

/// Single-sentence binary task whose label is the template, flipped with
/// probability `noise`.
pub fn template_task(n: usize, noise: f64, seed: u64) -> Vec<Example> {
    let corpus = two_template_corpus(n, seed);
    let mut rng = stream_rng(seed, "synthetic-labels");
    corpus
        .sentences
        .into_iter()
        .zip(corpus.templates)
        .enumerate()
        .map(|(i, (s, t))| {
            let label = if rng.random_bool(noise) { 1 - t } else { t };
            Example::single(i.to_string(), s, Some(Label::Class(label)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_vocabularies_are_disjoint() {
        let c = two_template_corpus(40, 1);
        let words = |t: usize| -> HashSet<String> {
            c.sentences
                .iter()
                .zip(&c.templates)
                .filter(|(_, &tt)| tt == t)
                .flat_map(|(s, _)| s.split(' ').map(String::from).collect::<Vec<_>>())
                .collect()
        };
        assert!(words(0).is_disjoint(&words(1)));
        assert_eq!(c.sentences.iter().collect::<HashSet<_>>().len(), 40);
        for s in &c.sentences {
            assert!(s.split(' ').any(|w| !c.lexicon.synonyms(w).is_empty()));
        }
    }

    #[test]
    fn noiseless_labels_follow_templates() {
        let ex = template_task(10, 0.0, 3);
        for (i, e) in ex.iter().enumerate() {
            assert_eq!(e.label, Some(Label::Class(i % 2)));
        }
    }
}
