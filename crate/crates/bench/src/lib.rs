//! Fixtures shared by the benchmarks.

use cert_core::encoder::{init_encoder, init_projection, EncoderConfig};
use cert_core::numeric::ParamSet;
use cert_core::rng::stream_rng;
use cert_core::synthetic::two_template_corpus;
use cert_core::text::{encode_text, BasicTokenizer, TokenSequence, Vocabulary};

pub struct EncoderFixture {
    pub cfg: EncoderConfig,
    pub params: ParamSet,
    pub batch: Vec<TokenSequence>,
}

/// A `d_model`-wide encoder with projection head and a batch of 16
/// synthetic sentences.
pub fn encoder_fixture(d_model: usize) -> EncoderFixture {
    let corpus = two_template_corpus(16, 3);
    let vocab = Vocabulary::build(&corpus.sentences, 1, &BasicTokenizer).expect("vocabulary");
    let cfg = EncoderConfig {
        vocab_size: vocab.len(),
        d_model,
        n_heads: 4,
        n_layers: 2,
        d_ff: 2 * d_model,
        max_seq_len: 12,
        d_proj: 16,
        ..EncoderConfig::default()
    };
    let mut rng = stream_rng(0, "bench");
    let mut params = init_encoder(&cfg, &mut rng).expect("encoder init");
    params.extend_from(&init_projection(&cfg, &mut rng));
    let batch = corpus
        .sentences
        .iter()
        .map(|s| encode_text(s, None, &vocab, &BasicTokenizer, cfg.max_seq_len).expect("encodes"))
        .collect();
    EncoderFixture { cfg, params, batch }
}
