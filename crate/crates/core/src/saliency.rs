//! Gradient-based identification of hot characters, words and phrases,
//! per-class hot training phrase mining, and the FGSM baseline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::codec::{decode_chars, Doc};
use crate::error::{Error, Result};
use crate::models::{no_gradients, Backend, Classifier, ClassifierHandle};
use crate::nn::{ConfVector, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaliencyConfig {
    /// Hot characters kept per sample.
    pub hot_chars: usize,
    /// Hot characters a token needs to count as a hot word.
    pub min_hot_chars: usize,
    /// Hot words kept per sample for word models.
    pub hot_words: usize,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            hot_chars: 50,
            min_hot_chars: 3,
            hot_words: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharScore {
    pub position: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanKind {
    Word,
    Phrase,
}

/// Tokens `[start, end)` of a doc with their combined score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotSpan {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub score: f64,
    pub kind: SpanKind,
}

impl HotSpan {
    pub fn contains(&self, token: usize) -> bool {
        (self.start..self.end).contains(&token)
    }

    /// Character range `[first, last)` covered in the doc.
    pub fn char_range(&self, doc: &Doc) -> (usize, usize) {
        let t = doc.tokens();
        (t[self.start].start, t[self.end - 1].end)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HotItems {
    /// Hot character positions, best first.
    pub chars: Vec<usize>,
    /// Hot token indices in text order with their scores.
    pub words: Vec<(usize, f64)>,
    pub phrases: Vec<HotSpan>,
}

/// Indices of the `k` largest scores; ties go to the smaller index.
pub(crate) fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Merges scored tokens into maximal runs of adjacent tokens, best first.
pub fn assemble_phrases(doc: &Doc, words: &[(usize, f64)]) -> Vec<HotSpan> {
    let mut sorted = words.to_vec();
    sorted.sort_by_key(|w| w.0);
    let mut spans: Vec<HotSpan> = Vec::new();
    for (tok, score) in sorted {
        match spans.last_mut() {
            Some(last) if last.end == tok => {
                last.end = tok + 1;
                last.score += score;
            }
            _ => spans.push(HotSpan {
                start: tok,
                end: tok + 1,
                surface: String::new(),
                score,
                kind: SpanKind::Word,
            }),
        }
    }
    for s in &mut spans {
        let (a, b) = s.char_range(doc);
        s.surface = doc.slice(a, b);
        if s.end - s.start > 1 {
            s.kind = SpanKind::Phrase;
        }
    }
    spans.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.start.cmp(&b.start)));
    spans
}

/// Hot characters, words and phrases from per-position scores.
/// Positions with a zero score carry no signal and are never hot.
pub fn hot_items(doc: &Doc, scores: &[f64], k: usize, min_hot_chars: usize) -> HotItems {
    let mut chars = top_k(scores, k);
    chars.retain(|&p| scores[p] > 0.0);
    let mut per_token: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    let tokens = doc.tokens();
    for &p in &chars {
        // tokens are sorted by start; find the one covering p
        let i = tokens.partition_point(|t| t.end <= p);
        if i < tokens.len() && tokens[i].start <= p {
            let e = per_token.entry(i).or_default();
            e.0 += 1;
            e.1 += scores[p];
        }
    }
    let words: Vec<(usize, f64)> = per_token
        .into_iter()
        .filter(|(_, (n, _))| *n >= min_hot_chars.max(1))
        .map(|(i, (_, s))| (i, s))
        .collect();
    let phrases = assemble_phrases(doc, &words);
    HotItems { chars, words, phrases }
}

/// Top-`k` tokens by score (zero scores excluded), assembled into phrases.
pub fn hot_words(doc: &Doc, scores: &[f64], k: usize) -> HotItems {
    let mut words: Vec<(usize, f64)> = top_k(scores, k)
        .into_iter()
        .filter(|&i| scores[i] > 0.0)
        .map(|i| (i, scores[i]))
        .collect();
    words.sort_by_key(|w| w.0);
    let phrases = assemble_phrases(doc, &words);
    HotItems {
        chars: Vec::new(),
        words,
        phrases,
    }
}

fn row_max_abs(grad: &Tensor, rows: usize) -> Vec<f64> {
    let width = grad.shape()[1];
    grad.data()
        .chunks(width)
        .take(rows)
        .map(|r| r.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect()
}

/// Max-abs input gradient per character position inside the window.
pub fn char_scores(h: &ClassifierHandle, doc: &Doc, class: usize) -> Result<Vec<CharScore>> {
    match h.backend() {
        Backend::Char { .. } => {}
        Backend::Word { .. } => {
            return Err(Error::Unsupported(
                "char_scores needs a char model; use word_scores".into(),
            ))
        }
        Backend::External(_) => return Err(no_gradients()),
    }
    let (enc, grad) = h.input_gradient(doc.text(), class)?;
    let rows = match enc {
        crate::codec::EncodedInput::CharGrid { positions, .. } => positions,
        _ => unreachable!("char backend"),
    };
    Ok(row_max_abs(&grad, rows)
        .into_iter()
        .enumerate()
        .map(|(position, score)| CharScore { position, score })
        .collect())
}

/// Max-abs gradient over each token's embedding row; tokens past the
/// window score 0.
pub fn word_scores(h: &ClassifierHandle, doc: &Doc, class: usize) -> Result<Vec<f64>> {
    match h.backend() {
        Backend::Word { .. } => {}
        Backend::Char { .. } => {
            return Err(Error::Unsupported(
                "word_scores needs a word model; use char_scores".into(),
            ))
        }
        Backend::External(_) => return Err(no_gradients()),
    }
    let (_, grad) = h.input_gradient(doc.text(), class)?;
    let mut scores = row_max_abs(&grad, doc.tokens().len().min(grad.shape()[0]));
    scores.resize(doc.tokens().len(), 0.0);
    Ok(scores)
}

/// Hot items of `doc` with respect to `class`, for either model kind.
pub fn hot_items_for(h: &ClassifierHandle, doc: &Doc, class: usize, cfg: &SaliencyConfig) -> Result<HotItems> {
    match h.backend() {
        Backend::Char { .. } => {
            let scores: Vec<f64> = char_scores(h, doc, class)?.iter().map(|c| c.score).collect();
            Ok(hot_items(doc, &scores, cfg.hot_chars, cfg.min_hot_chars))
        }
        Backend::Word { .. } => Ok(hot_words(doc, &word_scores(h, doc, class)?, cfg.hot_words)),
        Backend::External(_) => Err(no_gradients()),
    }
}

/// Per-token gradient score with respect to the predicted class: the word
/// model's row score, or the largest character score inside the token.
pub fn token_scores(h: &ClassifierHandle, doc: &Doc) -> Result<Vec<f64>> {
    if doc.tokens().is_empty() {
        return Ok(Vec::new());
    }
    let class = h.classify(doc.text())?.argmax();
    match h.backend() {
        Backend::Word { .. } => word_scores(h, doc, class),
        Backend::Char { .. } => {
            let chars = char_scores(h, doc, class)?;
            Ok(doc
                .tokens()
                .iter()
                .map(|t| {
                    chars
                        .get(t.start..t.end.min(chars.len()))
                        .unwrap_or_default()
                        .iter()
                        .fold(0.0f64, |m, c| m.max(c.score))
                })
                .collect())
        }
        Backend::External(_) => Err(no_gradients()),
    }
}

/// Hot sample phrases with respect to the currently predicted class.
pub fn hsps(h: &ClassifierHandle, doc: &Doc, cfg: &SaliencyConfig) -> Result<Vec<HotSpan>> {
    if doc.tokens().is_empty() {
        return Ok(Vec::new());
    }
    let class = h.classify(doc.text())?.argmax();
    Ok(hot_items_for(h, doc, class, cfg)?.phrases)
}

/// Lowercases, collapses whitespace and trims punctuation at both ends.
pub fn normalize_phrase(phrase: &str) -> String {
    let lower = phrase.to_lowercase();
    let joined = lower.split_whitespace().collect::<Vec<_>>().join(" ");
    joined
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace() || c == '\u{2019}')
        .to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HtpEntry {
    pub phrase: String,
    pub class: String,
    pub frequency: u64,
    pub rank: usize,
}

/// Ranked hot training phrases per class, in class order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HtpTable {
    pub classes: Vec<String>,
    pub entries: Vec<Vec<HtpEntry>>,
}

impl HtpTable {
    /// Ranks raw per-class counts: frequency descending, then phrase.
    pub fn from_counts(classes: &[String], counts: &[BTreeMap<String, u64>], top_n: usize) -> Self {
        let entries = classes
            .iter()
            .zip(counts)
            .map(|(class, c)| {
                let mut v: Vec<(&String, &u64)> = c.iter().collect();
                v.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
                v.into_iter()
                    .take(top_n)
                    .enumerate()
                    .map(|(i, (p, f))| HtpEntry {
                        phrase: p.clone(),
                        class: class.clone(),
                        frequency: *f,
                        rank: i + 1,
                    })
                    .collect()
            })
            .collect();
        Self {
            classes: classes.to_vec(),
            entries,
        }
    }

    pub fn get(&self, class: &str) -> Option<&[HtpEntry]> {
        let i = self.classes.iter().position(|c| c == class)?;
        Some(&self.entries[i])
    }

    /// Entries for `class`, failing when there are none.
    pub fn require(&self, class: &str) -> Result<&[HtpEntry]> {
        match self.get(class) {
            Some(e) if !e.is_empty() => Ok(e),
            _ => Err(Error::MissingHtps(class.to_string())),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (class, entries) in self.classes.iter().zip(&self.entries) {
            out.push_str(&format!("{class}\n"));
            for e in entries {
                out.push_str(&format!("  {:>3}  {:<32} {}\n", e.rank, e.phrase, e.frequency));
            }
        }
        out
    }
}

/// One sample's normalized phrases as counted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseDump {
    pub id: String,
    pub class: String,
    pub phrases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinedHtps {
    pub table: HtpTable,
    pub dump: Vec<PhraseDump>,
}

/// Counts dumped phrases per class; shared by both mining pipelines.
pub(crate) fn tally(classes: &[String], dump: &[PhraseDump], top_n: usize) -> HtpTable {
    let mut counts = vec![BTreeMap::<String, u64>::new(); classes.len()];
    for d in dump {
        let ci = classes.iter().position(|c| *c == d.class).expect("label checked");
        for p in &d.phrases {
            *counts[ci].entry(p.clone()).or_default() += 1;
        }
    }
    HtpTable::from_counts(classes, &counts, top_n)
}

pub(crate) fn labeled_class(h: &dyn Classifier, doc: &Doc) -> Result<usize> {
    let label = doc
        .label
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("doc `{}` has no label", doc.id)))?;
    h.class_index(label)
}

/// Hot phrases of every training sample (w.r.t. its label), counted per class.
pub fn mine_htps(h: &ClassifierHandle, docs: &[Doc], top_n: usize, cfg: &SaliencyConfig) -> Result<MinedHtps> {
    if docs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dump = crate::par::map(docs, |d| -> Result<PhraseDump> {
        let class = labeled_class(h, d)?;
        let phrases = hot_items_for(h, d, class, cfg)?
            .phrases
            .iter()
            .map(|p| normalize_phrase(&p.surface))
            .filter(|p| !p.is_empty())
            .collect();
        Ok(PhraseDump {
            id: d.id.clone(),
            class: h.classes()[class].clone(),
            phrases,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(MinedHtps {
        table: tally(h.classes(), &dump, top_n),
        dump,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgsmResult {
    pub epsilon: f64,
    pub grid: Tensor,
    pub text: String,
    /// Character positions whose grid row changed.
    pub changed: Vec<usize>,
    pub original: ConfVector,
    pub perturbed: ConfVector,
}

impl FgsmResult {
    pub fn changed_fraction(&self, doc: &Doc) -> f64 {
        if doc.char_len() == 0 {
            return 0.0;
        }
        self.changed.len() as f64 / doc.char_len() as f64
    }
}

fn char_parts(h: &ClassifierHandle) -> Result<&crate::codec::Alphabet> {
    match h.backend() {
        Backend::Char { alphabet, .. } => Ok(alphabet),
        Backend::Word { .. } => Err(Error::Unsupported("the FGSM baseline needs a char model".into())),
        Backend::External(_) => Err(no_gradients()),
    }
}

fn cost_class(h: &ClassifierHandle, doc: &Doc) -> Result<usize> {
    match &doc.label {
        Some(_) => labeled_class(h, doc),
        None => Ok(h.classify(doc.text())?.argmax()),
    }
}

/// Rewrites the characters of `doc` whose rows differ between the grids.
fn splice_rows(
    doc: &Doc,
    before: &Tensor,
    after: &Tensor,
    alphabet: &crate::codec::Alphabet,
) -> Result<(String, Vec<usize>)> {
    let width = alphabet.len();
    let mut chars: Vec<char> = doc.text().chars().collect();
    let mut changed = Vec::new();
    let rows = before.shape()[0];
    for r in 0..rows {
        let a = &before.data()[r * width..(r + 1) * width];
        let b = &after.data()[r * width..(r + 1) * width];
        if a == b {
            continue;
        }
        let row = Tensor::new(vec![1, width], b.to_vec())?;
        let c = decode_chars(&row, alphabet)?.chars().next().unwrap_or(' ');
        if r < chars.len() {
            chars[r] = c;
        } else {
            chars.resize(r, ' ');
            chars.push(c);
        }
        changed.push(r);
    }
    Ok((chars.into_iter().collect(), changed))
}

/// Untargeted FGSM on the one-hot grid: `x + epsilon * sign(grad J(true class))`,
/// clipped to `[0, 1]` and decoded back to text.
pub fn fgsm_baseline(h: &ClassifierHandle, doc: &Doc, epsilon: f64) -> Result<FgsmResult> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let alphabet = char_parts(h)?;
    let class = cost_class(h, doc)?;
    let (enc, grad) = h.input_gradient(doc.text(), class)?;
    let x = enc.tensor();
    let mut grid = x.clone();
    for (v, g) in grid.data_mut().iter_mut().zip(grad.data()) {
        let step = if *g > 0.0 {
            epsilon
        } else if *g < 0.0 {
            -epsilon
        } else {
            0.0
        };
        *v = (*v + step).clamp(0.0, 1.0);
    }
    let net = h.network().expect("char model");
    let original = net.forward(x)?;
    let perturbed = net.forward(&grid)?;
    let (text, changed) = splice_rows(doc, x, &grid, alphabet)?;
    Ok(FgsmResult {
        epsilon,
        grid,
        text,
        changed,
        original,
        perturbed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipResult {
    pub positions: Vec<usize>,
    pub text: String,
    pub original: ConfVector,
    pub perturbed: ConfVector,
}

/// Replaces the `n` highest-gradient characters with the character whose
/// gradient component is largest in that row.
pub fn fgsm_flip(h: &ClassifierHandle, doc: &Doc, n: usize) -> Result<FlipResult> {
    let alphabet = char_parts(h)?;
    let class = cost_class(h, doc)?;
    let (enc, grad) = h.input_gradient(doc.text(), class)?;
    let width = alphabet.len();
    let rows = match &enc {
        crate::codec::EncodedInput::CharGrid { positions, .. } => *positions,
        _ => unreachable!("char backend"),
    };
    let scores = row_max_abs(&grad, rows);
    let mut positions: Vec<usize> = top_k(&scores, n).into_iter().filter(|&p| scores[p] > 0.0).collect();
    positions.sort_unstable();
    let mut chars: Vec<char> = doc.text().chars().collect();
    for &p in &positions {
        let row = &grad.data()[p * width..(p + 1) * width];
        let best = (0..width).fold(0, |b, i| if row[i] > row[b] { i } else { b });
        chars[p] = alphabet.char_at(best);
    }
    let text: String = chars.into_iter().collect();
    Ok(FlipResult {
        positions,
        original: h.classify(doc.text())?,
        perturbed: h.classify(&text)?,
        text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> Doc {
        Doc::new("0", text, None)
    }

    #[test]
    fn adjacency_rule() {
        let d = doc("w1 w2 w3 w4");
        let spans = assemble_phrases(&d, &[(0, 1.0), (1, 1.0), (3, 5.0)]);
        let surfaces: Vec<&str> = spans.iter().map(|s| s.surface.as_str()).collect();
        assert_eq!(surfaces, ["w4", "w1 w2"]);
        assert_eq!(spans[1].kind, SpanKind::Phrase);
        assert_eq!(spans[0].kind, SpanKind::Word);
    }

    #[test]
    fn hot_word_needs_three_hot_chars() {
        let d = doc("abc de");
        let scores = [1.0, 1.0, 0.5, 0.0, 2.0, 2.0];
        let items = hot_items(&d, &scores, 10, 3);
        assert_eq!(items.words, vec![(0, 2.5)]);
        // only two hot chars survive
        let items = hot_items(&d, &scores, 2, 3);
        assert!(items.phrases.is_empty());
        assert_eq!(items.chars, vec![4, 5]);
    }

    #[test]
    fn top_k_tie_goes_to_lower_position() {
        assert_eq!(top_k(&[1.0, 3.0, 3.0, 2.0], 2), vec![1, 2]);
        assert_eq!(top_k(&[0.0; 4], 3), vec![0, 1, 2]);
    }

    #[test]
    fn phrase_normalization() {
        assert_eq!(normalize_phrase("  Great \t Movie ,"), "great movie");
        assert_eq!(normalize_phrase("Lisbon."), "lisbon");
        assert_eq!(normalize_phrase(","), "");
    }

    #[test]
    fn table_ranks_by_frequency_then_phrase() {
        let classes = vec!["Building".to_string()];
        let mut c = BTreeMap::new();
        c.insert("tower".to_string(), 3);
        c.insert("historic".to_string(), 7279);
        c.insert("church".to_string(), 3);
        let t = HtpTable::from_counts(&classes, &[c], 2);
        let e = t.require("Building").unwrap();
        assert_eq!(e[0].phrase, "historic");
        assert_eq!(e[0].frequency, 7279);
        assert_eq!(e[1].phrase, "church");
        assert_eq!(e[1].rank, 2);
        assert!(matches!(t.require("Film"), Err(Error::MissingHtps(_))));
    }
}
