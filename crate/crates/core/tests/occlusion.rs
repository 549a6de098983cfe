mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use advtext_core::codec::Doc;
use advtext_core::models::Classifier;
use advtext_core::nn::ConfVector;
use advtext_core::occlusion::{deviations, deviations_in_order, gen_probes, hsps_black, mine_htps_black};
use advtext_core::{Error, Result};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Scores text by its share of vowels; counts calls and can fail on a marker.
struct Stub {
    classes: Vec<String>,
    calls: AtomicUsize,
    fail_on: Option<&'static str>,
}

impl Stub {
    fn new() -> Self {
        Self {
            classes: vec!["a".into(), "b".into()],
            calls: AtomicUsize::new(0),
            fail_on: None,
        }
    }
}

impl Classifier for Stub {
    fn class_names(&self) -> &[String] {
        &self.classes
    }

    fn classify(&self, text: &str) -> Result<ConfVector> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(m) = self.fail_on {
            if !text.contains(m) {
                return Err(Error::Oracle {
                    message: "stub refused".into(),
                    raw: String::new(),
                });
            }
        }
        let n = text.chars().filter(|c| !c.is_whitespace()).count().max(1) as f64;
        let v = text.chars().filter(|c| "aeiou".contains(*c)).count() as f64;
        let p = (0.05 + 0.9 * v / n).clamp(0.0, 1.0);
        Ok(ConfVector::new(vec![p, 1.0 - p]))
    }
}

fn text_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(("[a-zA-Z,.!']{1,8}", "[ \t\n]{1,3}"), 0..12)
        .prop_map(|parts| parts.into_iter().map(|(w, s)| w + &s).collect())
}

proptest! {
    #[test]
    fn probes_blank_exactly_one_token(text in text_strategy()) {
        let doc = Doc::new("p", text, None);
        let seed: Vec<char> = doc.text().chars().collect();
        let probes = gen_probes(&doc);
        prop_assert_eq!(probes.len(), doc.tokens().len());
        for (p, t) in probes.iter().zip(doc.tokens()) {
            let c: Vec<char> = p.text.chars().collect();
            prop_assert_eq!(c.len(), seed.len());
            for (i, (a, b)) in seed.iter().zip(&c).enumerate() {
                if (t.start..t.end).contains(&i) {
                    prop_assert_eq!(*b, ' ');
                } else {
                    prop_assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn deviations_ignore_evaluation_order(text in text_strategy(), seed in any::<u64>()) {
        let doc = Doc::new("p", text, None);
        let stub = Stub::new();
        let base = deviations(&stub, &doc).unwrap();
        let mut order: Vec<usize> = (0..doc.tokens().len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(deviations_in_order(&stub, &doc, &order).unwrap(), base);
    }
}

#[test]
fn one_call_per_token_plus_seed() {
    let doc = Doc::new("1", "the tower was built in 1890 by a local firm", None);
    let stub = Stub::new();
    deviations(&stub, &doc).unwrap();
    assert_eq!(stub.calls.load(Ordering::SeqCst), doc.tokens().len() + 1);
}

#[test]
fn failed_probe_names_its_token() {
    // every probe lacks one token; the one lacking "tower" fails
    let doc = Doc::new("1", "the tower stands", None);
    let stub = Stub {
        fail_on: Some("tower"),
        ..Stub::new()
    };
    match deviations(&stub, &doc) {
        Err(Error::ProbeFailed { token, .. }) => assert_eq!(token, 1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn order_must_be_a_permutation() {
    let doc = Doc::new("1", "a b c", None);
    let stub = Stub::new();
    assert!(deviations_in_order(&stub, &doc, &[0, 1]).is_err());
    assert!(deviations_in_order(&stub, &doc, &[0, 1, 1]).is_err());
    assert!(deviations_in_order(&stub, &doc, &[2, 0, 1]).is_ok());
}

#[test]
fn black_mining_counts_one_word_per_sample() {
    let f = common::sentiment_word();
    let docs = &f.corpus.train[..30];
    let mined = mine_htps_black(&f.model, docs, 50).unwrap();
    assert!(mined.dump.iter().all(|d| d.phrases.len() <= 1));
    let total: u64 = mined.table.entries.iter().flatten().map(|e| e.frequency).sum();
    assert_eq!(
        total as usize,
        mined.dump.iter().map(|d| d.phrases.len()).sum::<usize>()
    );
    let spans = hsps_black(&f.model, &docs[0], 3).unwrap();
    assert!(!spans.is_empty() && spans.iter().map(|s| s.end - s.start).sum::<usize>() <= 3);
}
