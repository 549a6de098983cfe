use advtext_core::codec::{
    decode_chars, encode_chars, encode_words, tokenize, Alphabet, Doc, Vocabulary, DEFAULT_ALPHABET,
};
use proptest::prelude::*;

fn in_alphabet() -> impl Strategy<Value = String> {
    let chars: Vec<char> = DEFAULT_ALPHABET.chars().chain([' ']).collect();
    prop::collection::vec(prop::sample::select(chars), 0..80)
        .prop_map(|v| v.into_iter().collect::<String>().trim_end().to_string())
}

proptest! {
    #[test]
    fn decode_inverts_encode(s in in_alphabet()) {
        let a = Alphabet::default();
        let enc = encode_chars(&s, &a, 80).unwrap();
        prop_assert_eq!(decode_chars(enc.tensor(), &a).unwrap(), s);
    }

    #[test]
    fn uppercase_folds(s in "[A-Z]{1,20}") {
        let a = Alphabet::default();
        let upper = encode_chars(&s, &a, 20).unwrap();
        let lower = encode_chars(&s.to_lowercase(), &a, 20).unwrap();
        prop_assert_eq!(upper, lower);
    }

    #[test]
    fn token_offsets_slice_the_text(s in "\\PC{0,60}") {
        let chars: Vec<char> = s.chars().collect();
        let toks = tokenize(&s);
        let mut last = 0;
        for t in &toks {
            prop_assert!(t.start >= last && t.start < t.end);
            prop_assert_eq!(chars[t.start..t.end].iter().collect::<String>(), t.word.clone());
            prop_assert!(!t.word.chars().any(char::is_whitespace));
            last = t.end;
        }
        let words: Vec<&str> = s.split_whitespace().collect();
        prop_assert_eq!(toks.iter().map(|t| t.word.as_str()).collect::<Vec<_>>(), words);
    }

    #[test]
    fn word_indices_stay_in_range(s in "[a-e ]{0,40}", len in 1usize..12) {
        let vocab = Vocabulary::from_words(["a", "bb", "c"].map(String::from)).unwrap();
        let enc = encode_words(&s, &vocab, len).unwrap();
        prop_assert_eq!(enc.tensor().shape(), &[len]);
        prop_assert!(enc.tensor().data().iter().all(|&i| i >= 0.0 && (i as usize) < vocab.len()));
    }
}

#[test]
fn docs_rebuild_tokens_when_deserialized() {
    let d = Doc::new("3", "Edward & Mrs. Simpson", Some("Film".into()));
    let json = serde_json::to_string(&d).unwrap();
    assert!(!json.contains("tokens"));
    let back: Doc = serde_json::from_str(&json).unwrap();
    assert_eq!(back, d);
    assert_eq!(back.tokens().len(), 4);
}
