#![allow(dead_code)]

pub mod gradcheck;
pub mod oracle;
pub mod random;

use std::sync::OnceLock;

use advtext_core::codec::{Alphabet, Doc, Vocabulary};
use advtext_core::models::{train_classifier, CharArch, ClassifierHandle, ConvStage, Pool, WordArch};
use advtext_core::nn::TrainConfig;
use advtext_core::saliency::{mine_htps, HtpTable, SaliencyConfig};
use advtext_core::toydata::{self, Corpus};

pub fn small_char_arch() -> CharArch {
    CharArch {
        convs: vec![
            ConvStage {
                width: 5,
                filters: 12,
                pool: Pool::Size(3),
            },
            ConvStage {
                width: 3,
                filters: 12,
                pool: Pool::OverTime,
            },
        ],
        dense: vec![16],
        dropout: 0.0,
    }
}

pub struct Fixture {
    pub corpus: Corpus,
    pub model: ClassifierHandle,
    pub htps: HtpTable,
}

fn quick_train(h: &mut ClassifierHandle, docs: &[Doc], epochs: usize) {
    let cfg = TrainConfig {
        epochs,
        learning_rate: 0.05,
        batch_size: 8,
        seed: 3,
    };
    train_classifier(h, docs, &cfg).unwrap();
}

/// Briefly trained 4-class char model on short topic docs.
pub fn topic_char() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let corpus = toydata::topic_corpus(160, 40, 5);
        let mut model = ClassifierHandle::build_char_cnn(
            "t",
            corpus.classes.clone(),
            Alphabet::default(),
            320,
            &small_char_arch(),
            2,
        )
        .unwrap();
        quick_train(&mut model, &corpus.train, 4);
        let htps = mine_htps(&model, &corpus.train, 10, &SaliencyConfig::default())
            .unwrap()
            .table;
        Fixture { corpus, model, htps }
    })
}

/// Briefly trained 2-class word model on reviews.
pub fn sentiment_word() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let corpus = toydata::sentiment_corpus(200, 40, 5);
        let vocab = Vocabulary::build(corpus.train.iter().map(|d| d.text()), 1, 5000);
        let arch = WordArch {
            maps: 12,
            ..WordArch::default()
        };
        let mut model = ClassifierHandle::build_word_cnn("s", corpus.classes.clone(), vocab, 64, &arch, 2).unwrap();
        quick_train(&mut model, &corpus.train, 5);
        let htps = mine_htps(&model, &corpus.train, 10, &SaliencyConfig::default())
            .unwrap()
            .table;
        Fixture { corpus, model, htps }
    })
}
