#![allow(dead_code)]

use std::sync::OnceLock;

use advtext_core::codec::{Alphabet, Vocabulary};
use advtext_core::models::{train_classifier, CharArch, ClassifierHandle, ConvStage, Pool, WordArch};
use advtext_core::nn::TrainConfig;
use advtext_core::saliency::{mine_htps, HtpTable, SaliencyConfig};
use advtext_core::toydata::{self, Corpus};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use advtext_service::{router, AppState};

pub struct Fixture {
    pub corpus: Corpus,
    pub model: ClassifierHandle,
    pub htps: HtpTable,
}

fn train(mut model: ClassifierHandle, corpus: Corpus, epochs: usize) -> Fixture {
    let cfg = TrainConfig {
        epochs,
        learning_rate: 0.05,
        batch_size: 8,
        seed: 3,
    };
    train_classifier(&mut model, &corpus.train, &cfg).unwrap();
    let htps = mine_htps(&model, &corpus.train, 10, &SaliencyConfig::default())
        .unwrap()
        .table;
    Fixture { corpus, model, htps }
}

/// Briefly trained 2-class word model, id `s`.
pub fn sentiment_word() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let corpus = toydata::sentiment_corpus(200, 40, 5);
        let vocab = Vocabulary::build(corpus.train.iter().map(|d| d.text()), 1, 5000);
        let arch = WordArch {
            maps: 12,
            ..WordArch::default()
        };
        let model = ClassifierHandle::build_word_cnn("s", corpus.classes.clone(), vocab, 64, &arch, 2).unwrap();
        train(model, corpus, 5)
    })
}

/// Briefly trained 4-class char model, id `t`.
pub fn topic_char() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let corpus = toydata::topic_corpus(160, 40, 5);
        let arch = CharArch {
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
        };
        let model =
            ClassifierHandle::build_char_cnn("t", corpus.classes.clone(), Alphabet::default(), 320, &arch, 2).unwrap();
        train(model, corpus, 4)
    })
}

pub fn app() -> Router {
    let (s, t) = (sentiment_word(), topic_char());
    let state = AppState::builder(toydata::lexicons())
        .model(s.model.clone(), Some(s.htps.clone()))
        .model(t.model.clone(), Some(t.htps.clone()))
        .build();
    router(state)
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    call_raw(app, method, uri, body.map(|b| b.to_string())).await
}

pub async fn call_raw(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}
