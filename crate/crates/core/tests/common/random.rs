//! Random small objects for persistence roundtrips.

use advtext_core::attack::{AttackTrace, Counts, Knowledge, Outcome, Step};
use advtext_core::codec::{Alphabet, Doc, Vocabulary, DEFAULT_ALPHABET};
use advtext_core::models::{Backend, CharArch, ClassifierHandle, ConvStage, Pool, WordArch};
use advtext_core::nn::ConfVector;
use advtext_core::perturb::{DirectionCheck, Kind, Lexicons, Method, Perturbation};
use advtext_core::saliency::HtpTable;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Any finite double, including subnormals and signed zeros.
pub fn float(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let v = f64::from_bits(rng.gen());
        if v.is_finite() {
            return v;
        }
    }
}

pub fn word(rng: &mut ChaCha8Rng) -> String {
    const POOL: &[char] = &['a', 'b', 'e', 'k', 'o', 'r', 's', 'z', 'é', 'ß', '\'', '-', '7'];
    (0..rng.gen_range(1..8)).map(|_| *POOL.choose(rng).unwrap()).collect()
}

pub fn text(rng: &mut ChaCha8Rng) -> String {
    let seps = [" ", "  ", ", ", "\n", " \"q\" "];
    (0..rng.gen_range(0..10))
        .map(|_| word(rng) + seps.choose(rng).unwrap())
        .collect()
}

fn classes(rng: &mut ChaCha8Rng) -> Vec<String> {
    (0..rng.gen_range(2..5)).map(|i| format!("C{i}{}", word(rng))).collect()
}

fn scramble(h: &mut ClassifierHandle, rng: &mut ChaCha8Rng) {
    for p in h.network_mut().unwrap().params_mut() {
        p.data_mut().iter_mut().for_each(|v| *v = float(rng));
    }
}

pub fn char_model(rng: &mut ChaCha8Rng) -> ClassifierHandle {
    let mut chars: Vec<char> = DEFAULT_ALPHABET.chars().collect();
    chars.shuffle(rng);
    chars.truncate(rng.gen_range(1..chars.len()));
    let pools = [Pool::None, Pool::Size(2), Pool::OverTime];
    let mut convs: Vec<ConvStage> = (0..rng.gen_range(1..3))
        .map(|_| ConvStage {
            width: rng.gen_range(1..4),
            filters: rng.gen_range(1..5),
            pool: *pools[..2].choose(rng).unwrap(),
        })
        .collect();
    if rng.gen_bool(0.5) {
        convs.last_mut().unwrap().pool = pools[2];
    }
    let arch = CharArch {
        convs,
        dense: (0..rng.gen_range(0..3)).map(|_| rng.gen_range(1..6)).collect(),
        dropout: if rng.gen_bool(0.5) { 0.0 } else { 0.25 },
    };
    let mut h = ClassifierHandle::build_char_cnn(
        word(rng),
        classes(rng),
        Alphabet::new(chars).unwrap(),
        rng.gen_range(12..30),
        &arch,
        rng.gen(),
    )
    .unwrap();
    scramble(&mut h, rng);
    h
}

pub fn word_model(rng: &mut ChaCha8Rng) -> ClassifierHandle {
    let mut words: Vec<String> = (0..rng.gen_range(0..20)).map(|_| word(rng)).collect();
    words.sort();
    words.dedup();
    let arch = WordArch {
        embed_dim: rng.gen_range(1..6),
        widths: (1..=rng.gen_range(1..4)).collect(),
        maps: rng.gen_range(1..5),
        dropout: 0.5,
    };
    let vocab = Vocabulary::from_words(words).unwrap();
    let mut h =
        ClassifierHandle::build_word_cnn(word(rng), classes(rng), vocab, rng.gen_range(4..12), &arch, rng.gen())
            .unwrap();
    scramble(&mut h, rng);
    h
}

/// Exact equality of everything a checkpoint stores.
pub fn same_model(a: &ClassifierHandle, b: &ClassifierHandle) -> bool {
    let codec = match (a.backend(), b.backend()) {
        (
            Backend::Char {
                alphabet: x, len: m, ..
            },
            Backend::Char {
                alphabet: y, len: n, ..
            },
        ) => x == y && m == n,
        (Backend::Word { vocab: x, len: m, .. }, Backend::Word { vocab: y, len: n, .. }) => {
            x.words() == y.words() && m == n
        }
        _ => false,
    };
    let (na, nb) = (a.network().unwrap(), b.network().unwrap());
    let bits = |n: &advtext_core::nn::Network| -> Vec<u64> {
        n.params()
            .iter()
            .flat_map(|p| p.data().iter().map(|v| v.to_bits()))
            .collect()
    };
    codec
        && a.id == b.id
        && a.classes() == b.classes()
        && na.input_shape() == nb.input_shape()
        && na.layers() == nb.layers()
        && na.param_shapes() == nb.param_shapes()
        && bits(na) == bits(nb)
}

pub fn htp_table(rng: &mut ChaCha8Rng) -> HtpTable {
    let classes = classes(rng);
    let counts: Vec<BTreeMap<String, u64>> = classes
        .iter()
        .map(|_| {
            (0..rng.gen_range(0..12))
                .map(|_| {
                    let phrase = (0..rng.gen_range(1..4))
                        .map(|_| word(rng))
                        .collect::<Vec<_>>()
                        .join(" ");
                    (phrase, rng.gen_range(1..10_000u64))
                })
                .collect()
        })
        .collect();
    HtpTable::from_counts(&classes, &counts, rng.gen_range(1..15))
}

fn conf(rng: &mut ChaCha8Rng, n: usize) -> ConfVector {
    ConfVector::new((0..n).map(|_| float(rng)).collect())
}

pub fn trace(rng: &mut ChaCha8Rng) -> AttackTrace {
    let n = rng.gen_range(2..5);
    let kinds = [Kind::Insert, Kind::Modify, Kind::Remove];
    let methods = [
        Method::HtpToken,
        Method::Parenthetical,
        Method::UserSnippet,
        Method::Misspelling,
        Method::Homoglyph,
        Method::Paraphrase,
        Method::DispensableRemoval,
    ];
    let steps = (0..rng.gen_range(0..6))
        .map(|_| Step {
            perturbation: Perturbation {
                kind: *kinds.choose(rng).unwrap(),
                method: *methods.choose(rng).unwrap(),
                start: rng.gen_range(0..500),
                removed: word(rng),
                inserted: text(rng),
                tokens: rng.gen_bool(0.5).then(|| (rng.gen_range(0..9), rng.gen_range(9..20))),
                provenance: text(rng),
            },
            conf_before: conf(rng, n),
            conf_after: conf(rng, n),
            candidates: rng.gen_range(0..150),
            direction: rng.gen_bool(0.5).then(|| DirectionCheck {
                source: float(rng),
                target: float(rng),
            }),
        })
        .collect();
    let outcomes = [
        Outcome::Success,
        Outcome::BudgetExhausted,
        Outcome::NoImprovingCandidate,
    ];
    AttackTrace {
        original: Doc::new(
            rng.gen_range(1..999).to_string(),
            text(rng),
            rng.gen_bool(0.8).then(|| word(rng)),
        ),
        source: word(rng),
        target: word(rng),
        knowledge: if rng.gen_bool(0.5) {
            Knowledge::White
        } else {
            Knowledge::Black
        },
        steps,
        outcome: *outcomes.choose(rng).unwrap(),
        final_text: text(rng),
        final_conf: conf(rng, n),
        counts: Counts {
            inserted: rng.gen_range(0..5),
            modified: rng.gen_range(0..5),
            removed: rng.gen_range(0..5),
        },
        classifications: rng.gen(),
    }
}

/// Lexicon entries avoid the file separators (tab, newline, comma).
pub fn lexicons(rng: &mut ChaCha8Rng) -> Lexicons {
    let phrase = |rng: &mut ChaCha8Rng| {
        (0..rng.gen_range(1..3))
            .map(|_| word(rng))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let glyphs = ['a', 'l', 'o', 'е', 'і', '0', '1', 'ı'];
    let mut homoglyphs = Vec::new();
    for _ in 0..rng.gen_range(0..5) {
        let a = *glyphs.choose(rng).unwrap();
        let b = *glyphs
            .iter()
            .filter(|&&g| g != a)
            .collect::<Vec<_>>()
            .choose(rng)
            .unwrap();
        homoglyphs.push((a, *b));
    }
    Lexicons {
        misspellings: (0..rng.gen_range(0..8))
            .map(|_| (word(rng), (0..rng.gen_range(1..4)).map(|_| word(rng)).collect()))
            .collect(),
        homoglyphs,
        paraphrases: (0..rng.gen_range(0..5)).map(|_| (phrase(rng), phrase(rng))).collect(),
        dispensable: (0..rng.gen_range(0..8)).map(|_| word(rng)).collect(),
        templates: (0..rng.gen_range(0..4))
            .map(|_| {
                format!(
                    "( {} <htp> {} )",
                    word(rng),
                    if rng.gen_bool(0.3) { "<year>" } else { "" }
                )
            })
            .collect(),
        year: rng.gen_range(1000..3000),
    }
}

/// Labeled docs with CSV-hostile text.
pub fn dataset(rng: &mut ChaCha8Rng) -> Vec<Doc> {
    (0..rng.gen_range(0..8))
        .map(|i| {
            let mut t = text(rng);
            if rng.gen_bool(0.3) {
                t.push_str("\"quoted, with comma\"\r\nnext line");
            }
            Doc::new((i + 1).to_string(), t, Some(format!("L{}", word(rng))))
        })
        .collect()
}
