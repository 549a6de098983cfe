//! Text encodings: one-hot character grids for the character model,
//! whitespace tokens with character offsets, and vocabulary lookup for the
//! word model.
//!
//! All offsets are in Unicode scalar values (Rust `char`s), not bytes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// 26 letters, 10 digits and 33 symbols. Space is deliberately absent so
/// whitespace encodes as an all-zero column.
pub const DEFAULT_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789-,;.!?:'\"/\\|_@#$%^&*~`+=<>()[]{}\u{2019}";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl Alphabet {
    pub fn new(chars: Vec<char>) -> Result<Self> {
        if chars.is_empty() {
            return Err(Error::InvalidArgument("alphabet is empty".into()));
        }
        let mut index = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if c.is_whitespace() {
                return Err(Error::InvalidArgument(format!("alphabet entry {i} is whitespace")));
            }
            if index.insert(c, i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate alphabet character {c:?}")));
            }
        }
        Ok(Self { chars, index })
    }

    /// Parses the alphabet file format: one character per line.
    pub fn parse(content: &str) -> Result<Self> {
        let mut chars = Vec::new();
        for (n, line) in content.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.is_empty() {
                continue;
            }
            let mut it = line.chars();
            let c = it.next().expect("non-empty");
            if it.next().is_some() {
                return Err(Error::format(
                    "alphabet file",
                    format!("line {} holds more than one character", n + 1),
                ));
            }
            chars.push(c);
        }
        Self::new(chars)
    }

    pub fn to_file_string(&self) -> String {
        self.chars.iter().map(|c| format!("{c}\n")).collect()
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Row index of `c`, folding uppercase to lowercase.
    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&fold(c)).copied()
    }

    pub fn char_at(&self, i: usize) -> char {
        self.chars[i]
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Self::new(DEFAULT_ALPHABET.chars().collect()).expect("default alphabet is valid")
    }
}

fn fold(c: char) -> char {
    if c.is_uppercase() {
        let mut lower = c.to_lowercase();
        if let (Some(l), None) = (lower.next(), lower.next()) {
            return l;
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub word: String,
    /// First character offset.
    pub start: usize,
    /// One past the last character offset.
    pub end: usize,
}

/// Maximal runs of non-whitespace characters with their character offsets.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current: Option<(usize, String)> = None;
    for (pos, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            if let Some((start, word)) = current.take() {
                tokens.push(Token { word, start, end: pos });
            }
        } else {
            current.get_or_insert_with(|| (pos, String::new())).1.push(c);
        }
    }
    if let Some((start, word)) = current {
        let end = start + word.chars().count();
        tokens.push(Token { word, start, end });
    }
    tokens
}

/// A text with its tokenization and optional class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "StoredDoc")]
pub struct Doc {
    pub id: String,
    text: String,
    pub label: Option<String>,
    #[serde(skip)]
    tokens: Vec<Token>,
    #[serde(skip)]
    char_len: usize,
}

// Tokens are derived state and rebuilt on load.
#[derive(Deserialize)]
struct StoredDoc {
    id: String,
    text: String,
    label: Option<String>,
}

impl From<StoredDoc> for Doc {
    fn from(d: StoredDoc) -> Self {
        Doc::new(d.id, d.text, d.label)
    }
}

impl Doc {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Option<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        let char_len = text.chars().count();
        Self {
            id: id.into(),
            text,
            label,
            tokens,
            char_len,
        }
    }

    pub fn unlabeled(text: impl Into<String>) -> Self {
        Self::new("", text, None)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Length in characters.
    pub fn char_len(&self) -> usize {
        self.char_len
    }

    /// Characters `[start, end)` of the text.
    pub fn slice(&self, start: usize, end: usize) -> String {
        self.text.chars().skip(start).take(end.saturating_sub(start)).collect()
    }

    /// Same id and label over new text.
    pub fn with_text(&self, text: impl Into<String>) -> Doc {
        Doc::new(self.id.clone(), text, self.label.clone())
    }

    /// Rebuilds derived fields after deserialization.
    pub fn retokenized(self) -> Doc {
        Doc::new(self.id, self.text, self.label)
    }
}

/// Word index table; row 0 is reserved for unknown words and padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    embeddings: Option<Tensor>,
}

pub const UNKNOWN: &str = "<unk>";

impl Vocabulary {
    /// `words` excludes the reserved unknown row.
    pub fn from_words(words: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut all = vec![UNKNOWN.to_string()];
        let mut index = HashMap::new();
        for w in words {
            let w = w.to_lowercase();
            if w == UNKNOWN {
                continue;
            }
            if index.contains_key(&w) {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary word {w:?}")));
            }
            index.insert(w.clone(), all.len());
            all.push(w);
        }
        Ok(Self {
            words: all,
            index,
            embeddings: None,
        })
    }

    /// Lowercased tokens seen at least `min_count` times, most frequent first
    /// (ties alphabetical), capped at `max_size` entries besides unknown.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize, max_size: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for t in tokenize(text) {
                *counts.entry(t.word.to_lowercase()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size);
        Self::from_words(ranked.into_iter().map(|(w, _)| w)).expect("counted words are distinct")
    }

    /// Parses a word-vector file: a word then `D` floats per line. Row 0
    /// (unknown) is all zeros.
    pub fn parse_embeddings(content: &str) -> Result<Self> {
        let mut words = Vec::new();
        let mut rows: Vec<f64> = Vec::new();
        let mut dim = None;
        for (n, line) in content.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values: Vec<f64> = parts
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format("embedding file", format!("line {}: {e}", n + 1)))?;
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(
                    "embedding file",
                    format!("line {} needs finite floats after the word", n + 1),
                ));
            }
            match dim {
                None => {
                    dim = Some(values.len());
                    rows.extend(std::iter::repeat_n(0.0, values.len()));
                }
                Some(d) if d != values.len() => {
                    return Err(Error::format(
                        "embedding file",
                        format!("line {} has {} values, expected {d}", n + 1, values.len()),
                    ))
                }
                _ => {}
            }
            words.push(word.to_string());
            rows.extend(values);
        }
        let dim = dim.ok_or_else(|| Error::format("embedding file", "no vectors"))?;
        let mut vocab = Self::from_words(words)?;
        vocab.embeddings = Some(Tensor::new(vec![vocab.len(), dim], rows)?);
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn lookup(&self, word: &str) -> usize {
        self.index.get(&word.to_lowercase()).copied().unwrap_or(0)
    }

    /// Imported vectors, if any.
    pub fn embeddings(&self) -> Option<&Tensor> {
        self.embeddings.as_ref()
    }
}

/// Encoded model input plus its position bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub enum EncodedInput {
    /// `[L, |A|]` one-hot rows; text character `p` maps to row `p` for `p < positions`.
    CharGrid { grid: Tensor, positions: usize },
    /// `[T]` vocabulary indices; token `i` maps to row `i` for `i < rows`.
    WordSeq { indices: Tensor, rows: usize },
}

impl EncodedInput {
    pub fn tensor(&self) -> &Tensor {
        match self {
            EncodedInput::CharGrid { grid, .. } => grid,
            EncodedInput::WordSeq { indices, .. } => indices,
        }
    }

    pub fn into_tensor(self) -> Tensor {
        match self {
            EncodedInput::CharGrid { grid, .. } => grid,
            EncodedInput::WordSeq { indices, .. } => indices,
        }
    }
}

pub fn encode_chars(text: &str, alphabet: &Alphabet, len: usize) -> Result<EncodedInput> {
    if len == 0 {
        return Err(Error::InvalidArgument("input length must be positive".into()));
    }
    let width = alphabet.len();
    let mut grid = vec![0.0; len * width];
    let mut positions = 0;
    for (row, c) in text.chars().take(len).enumerate() {
        if let Some(i) = alphabet.index_of(c) {
            grid[row * width + i] = 1.0;
        }
        positions = row + 1;
    }
    Ok(EncodedInput::CharGrid {
        grid: Tensor::new(vec![len, width], grid)?,
        positions,
    })
}

/// Per row: the argmax character when its value exceeds 0.5, else a space.
/// Trailing spaces are stripped.
pub fn decode_chars(grid: &Tensor, alphabet: &Alphabet) -> Result<String> {
    match grid.shape() {
        [_, w] if *w == alphabet.len() => {}
        other => {
            return Err(Error::InvalidArgument(format!(
                "grid {other:?} does not match a {}-character alphabet",
                alphabet.len()
            )))
        }
    }
    let width = alphabet.len();
    let mut out = String::new();
    for row in grid.data().chunks(width) {
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        out.push(if row[best] > 0.5 { alphabet.char_at(best) } else { ' ' });
    }
    out.truncate(out.trim_end_matches(' ').len());
    Ok(out)
}

pub fn encode_words(text: &str, vocab: &Vocabulary, len: usize) -> Result<EncodedInput> {
    if len == 0 {
        return Err(Error::InvalidArgument("input length must be positive".into()));
    }
    let mut indices = vec![0.0; len];
    let mut rows = 0;
    for (i, t) in tokenize(text).iter().take(len).enumerate() {
        indices[i] = vocab.lookup(&t.word) as f64;
        rows = i + 1;
    }
    Ok(EncodedInput::WordSeq {
        indices: Tensor::new(vec![len], indices)?,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_alphabet_has_69_symbols() {
        let a = Alphabet::default();
        assert_eq!(a.len(), 69);
        assert_eq!(a.index_of(' '), None);
        assert_eq!(a.index_of('C'), Some(2));
    }

    #[test]
    fn c_is_third_unit_vector() {
        let a = Alphabet::default();
        let enc = encode_chars("c", &a, 4).unwrap();
        let g = enc.tensor();
        let row: Vec<f64> = g.data()[..a.len()].to_vec();
        let mut want = vec![0.0; a.len()];
        want[2] = 1.0;
        assert_eq!(row, want);
    }

    #[test]
    fn small_alphabet_grid() {
        let a = Alphabet::new(vec!['a', 'b']).unwrap();
        let enc = encode_chars("ab", &a, 3).unwrap();
        assert_eq!(enc.tensor().data(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let EncodedInput::CharGrid { positions, .. } = enc else {
            unreachable!()
        };
        assert_eq!(positions, 2);
    }

    #[test]
    fn empty_text_is_all_padding() {
        let enc = encode_chars("", &Alphabet::default(), 8).unwrap();
        assert!(enc.tensor().data().iter().all(|&v| v == 0.0));
        assert_eq!(enc.tensor().shape(), &[8, 69]);
    }

    #[test]
    fn decode_roundtrip_and_blank_columns() {
        let a = Alphabet::default();
        let enc = encode_chars("cat", &a, 10).unwrap();
        assert_eq!(decode_chars(enc.tensor(), &a).unwrap(), "cat");
        let enc = encode_chars("a cat", &a, 10).unwrap();
        assert_eq!(decode_chars(enc.tensor(), &a).unwrap(), "a cat");
    }

    #[test]
    fn decode_continuous_grid_takes_per_row_argmax() {
        let a = Alphabet::new(vec!['x', 'y', 'z']).unwrap();
        // rows: argmax y (0.9), nothing above 0.5, argmax x (0.6 beats 0.55)
        let grid = Tensor::new(vec![3, 3], vec![0.2, 0.9, 0.1, 0.5, 0.4, 0.3, 0.6, 0.0, 0.55]).unwrap();
        assert_eq!(decode_chars(&grid, &a).unwrap(), "y x");
    }

    #[test]
    fn truncates_long_text() {
        let a = Alphabet::default();
        let enc = encode_chars("abcdef", &a, 3).unwrap();
        assert_eq!(decode_chars(enc.tensor(), &a).unwrap(), "abc");
    }

    #[test]
    fn tokenize_offsets() {
        let toks = tokenize("Edward & Mrs. Simpson");
        let got: Vec<(&str, usize, usize)> = toks.iter().map(|t| (t.word.as_str(), t.start, t.end)).collect();
        assert_eq!(
            got,
            vec![("Edward", 0, 6), ("&", 7, 8), ("Mrs.", 9, 13), ("Simpson", 14, 21)]
        );
        assert!(tokenize("").is_empty());
        let toks = tokenize("a  b");
        assert_eq!((toks[0].start, toks[0].end, toks[1].start, toks[1].end), (0, 1, 3, 4));
    }

    #[test]
    fn tokenize_counts_chars_not_bytes() {
        let doc = Doc::unlabeled("fl\u{0131}m noir");
        assert_eq!(doc.tokens()[1].start, 5);
        assert_eq!(doc.slice(0, 4), "fl\u{0131}m");
    }

    #[test]
    fn word_encoding() {
        let vocab =
            Vocabulary::from_words(["a", "b", "c", "d", "great", "e", "f", "g", "movie"].map(String::from)).unwrap();
        assert_eq!(vocab.lookup("great"), 5);
        assert_eq!(vocab.lookup("movie"), 9);
        let enc = encode_words("great movie", &vocab, 4).unwrap();
        assert_eq!(enc.tensor().data(), &[5.0, 9.0, 0.0, 0.0]);
        assert_eq!(vocab.lookup("Great"), 5);
        assert_eq!(vocab.lookup("unseen"), 0);
        let long = vec!["great"; 40].join(" ");
        let enc = encode_words(&long, &vocab, 32).unwrap();
        assert_eq!(enc.tensor().len(), 32);
        let EncodedInput::WordSeq { rows, .. } = enc else {
            unreachable!()
        };
        assert_eq!(rows, 32);
    }

    #[test]
    fn embedding_import() {
        let v = Vocabulary::parse_embeddings("good 0.5 1.0\nbad -0.5 2\n").unwrap();
        assert_eq!(v.len(), 3);
        let e = v.embeddings().unwrap();
        assert_eq!(e.shape(), &[3, 2]);
        assert_eq!(e.data(), &[0.0, 0.0, 0.5, 1.0, -0.5, 2.0]);
        assert!(Vocabulary::parse_embeddings("good 0.5\nbad 1 2\n").is_err());
    }

    #[test]
    fn alphabet_file_rules() {
        let a = Alphabet::parse("a\nb\n\nc\n").unwrap();
        assert_eq!(a.chars(), &['a', 'b', 'c']);
        assert!(Alphabet::parse("a\na\n").is_err());
        assert!(Alphabet::parse("ab\n").is_err());
        assert_eq!(Alphabet::parse(&a.to_file_string()).unwrap(), a);
    }
}
