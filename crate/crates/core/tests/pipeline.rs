use cert_core::augment::{make_pairs, AugmentConfig, AugmentMethod};
use cert_core::cssl::MoCoConfig;
use cert_core::encoder::{Checkpoint, EncoderConfig};
use cert_core::pipeline::{pretrain_cssl, pretrain_mlm, PairSource, TrainConfig};
use cert_core::synthetic::{two_template_corpus, SyntheticCorpus};
use cert_core::text::{BasicTokenizer, Vocabulary};
use cert_core::CertError;

fn setup() -> (SyntheticCorpus, Vocabulary, Checkpoint) {
    let corpus = two_template_corpus(32, 3);
    let mut lines = corpus.sentences.clone();
    for (w, syns) in corpus.lexicon.iter() {
        lines.push(w.to_string());
        lines.extend(syns.iter().cloned());
    }
    let vocab = Vocabulary::build(&lines, 1, &BasicTokenizer).unwrap();
    let enc = EncoderConfig {
        d_model: 16,
        n_heads: 2,
        n_layers: 1,
        d_ff: 32,
        max_seq_len: 12,
        d_proj: 8,
        init_std: 0.1,
        ..EncoderConfig::default()
    };
    let mlm = TrainConfig {
        epochs: 1,
        base_lr: 0.01,
        ..TrainConfig::mlm()
    };
    let (ck, _) = pretrain_mlm(None, &corpus.sentences, &vocab, &enc, &mlm, 1).unwrap();
    (corpus, vocab, ck)
}

fn small() -> (MoCoConfig, TrainConfig) {
    let moco = MoCoConfig {
        queue_size: 16,
        momentum: 0.99,
        temperature: 0.1,
    };
    let train = TrainConfig {
        epochs: 3,
        batch_size: 8,
        base_lr: 0.003,
        ..TrainConfig::cssl()
    };
    (moco, train)
}

#[test]
fn resampled_cssl_is_deterministic_and_differs_from_fixed_pairs() {
    let (corpus, vocab, ck) = setup();
    let (moco, train) = small();
    let eda = AugmentConfig {
        method: AugmentMethod::Eda,
        ..AugmentConfig::default()
    };
    let resampled = || PairSource::Resampled {
        corpus: &corpus.sentences,
        augment: &eda,
        lexicon: &corpus.lexicon,
    };
    let a = pretrain_cssl(&ck, resampled(), &vocab, &moco, &train, 4, false).unwrap();
    let b = pretrain_cssl(&ck, resampled(), &vocab, &moco, &train, 4, false).unwrap();
    assert_eq!(a.checkpoint, b.checkpoint);
    assert_eq!(a.record.losses(), b.record.losses());
    assert_eq!(a.checkpoint.meta.stages, vec!["mlm".to_string(), "cssl".to_string()]);

    let pairs = make_pairs(&corpus.sentences, &eda, &corpus.lexicon, None, 4).unwrap();
    let fixed = pretrain_cssl(&ck, PairSource::Fixed(&pairs), &vocab, &moco, &train, 4, false).unwrap();
    assert_ne!(fixed.checkpoint.params, a.checkpoint.params);
}

#[test]
fn resampling_requires_eda() {
    let (corpus, vocab, ck) = setup();
    let (moco, train) = small();
    let bt = AugmentConfig::default();
    let source = PairSource::Resampled {
        corpus: &corpus.sentences,
        augment: &bt,
        lexicon: &corpus.lexicon,
    };
    let err = pretrain_cssl(&ck, source, &vocab, &moco, &train, 4, false)
        .err()
        .unwrap();
    assert!(matches!(err, CertError::Config(_)), "{err}");
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let (_, vocab, ck) = setup();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.cert");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    back.check_vocab(&vocab).unwrap();
}
