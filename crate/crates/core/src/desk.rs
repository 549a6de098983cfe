//! Frozen desk-scale recipes: corpus, architecture and training settings
//! for the four bundled models.

use std::path::Path;

use crate::codec::{Alphabet, Vocabulary};
use crate::error::Result;
use crate::models::{train_classifier, CharArch, ClassifierHandle, WordArch};
use crate::nn::TrainConfig;
use crate::store;
use crate::toydata::{self, Corpus};

pub const TOPIC_SEED: u64 = 11;
pub const SENTIMENT_SEED: u64 = 12;
pub const INIT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeskModel {
    TopicChar,
    TopicWord,
    SentimentChar,
    SentimentWord,
}

impl DeskModel {
    pub const ALL: [DeskModel; 4] = [
        Self::TopicChar,
        Self::TopicWord,
        Self::SentimentChar,
        Self::SentimentWord,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::TopicChar => "topic-char",
            Self::TopicWord => "topic-word",
            Self::SentimentChar => "sentiment-char",
            Self::SentimentWord => "sentiment-word",
        }
    }

    pub fn is_topic(self) -> bool {
        matches!(self, Self::TopicChar | Self::TopicWord)
    }

    pub fn corpus(self) -> Corpus {
        if self.is_topic() {
            topic()
        } else {
            sentiment()
        }
    }

    /// Input length: characters for char models, tokens for word models.
    pub fn input_len(self) -> usize {
        match self {
            Self::TopicChar => 1014,
            Self::TopicWord => 160,
            Self::SentimentChar => 512,
            Self::SentimentWord => 96,
        }
    }

    pub fn train_config(self) -> TrainConfig {
        let epochs = match self {
            Self::TopicChar => 12,
            Self::TopicWord => 10,
            Self::SentimentChar => 15,
            Self::SentimentWord => 20,
        };
        TrainConfig {
            epochs,
            learning_rate: 0.05,
            batch_size: 16,
            seed: 7,
        }
    }

    /// Untrained model sized for `corpus`.
    pub fn build(self, corpus: &Corpus) -> Result<ClassifierHandle> {
        let classes = corpus.classes.clone();
        match self {
            Self::TopicChar | Self::SentimentChar => ClassifierHandle::build_char_cnn(
                self.name(),
                classes,
                Alphabet::default(),
                self.input_len(),
                &CharArch::desk(),
                INIT_SEED,
            ),
            Self::TopicWord | Self::SentimentWord => {
                let vocab = Vocabulary::build(corpus.train.iter().map(|d| d.text()), 1, 20_000);
                ClassifierHandle::build_word_cnn(
                    self.name(),
                    classes,
                    vocab,
                    self.input_len(),
                    &WordArch::default(),
                    INIT_SEED,
                )
            }
        }
    }

    /// Builds and trains; returns the model and its loss curve.
    pub fn train(self, corpus: &Corpus) -> Result<(ClassifierHandle, Vec<f64>)> {
        let mut h = self.build(corpus)?;
        let curve = train_classifier(&mut h, &corpus.train, &self.train_config())?;
        Ok((h, curve))
    }
}

/// 4-class topic corpus, 800 train / 200 test.
pub fn topic() -> Corpus {
    toydata::topic_corpus(800, 200, TOPIC_SEED)
}

/// 2-class review corpus, 1200 train / 150 test.
pub fn sentiment() -> Corpus {
    toydata::sentiment_corpus(1200, 150, SENTIMENT_SEED)
}

/// Writes both corpora as CSV plus the bundled lexicons:
/// `{topic,sentiment}-{train,test}.csv` and `lexicons/`.
pub fn write_toy_data(dir: &Path) -> Result<()> {
    for (name, c) in [("topic", topic()), ("sentiment", sentiment())] {
        store::save_dataset(&dir.join(format!("{name}-train.csv")), &c.train)?;
        store::save_dataset(&dir.join(format!("{name}-test.csv")), &c.test)?;
    }
    store::save_lexicons(&dir.join("lexicons"), &toydata::lexicons())
}
