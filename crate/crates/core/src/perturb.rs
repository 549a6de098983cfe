//! Insertion, modification and removal perturbations over Docs.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::codec::{Doc, EncodedInput, Token};
use crate::error::{Error, Result};
use crate::models::{no_gradients, Backend, ClassifierHandle};
use crate::saliency::{HotSpan, HtpEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Insert,
    Modify,
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    HtpToken,
    Parenthetical,
    UserSnippet,
    Misspelling,
    Homoglyph,
    Paraphrase,
    DispensableRemoval,
}

impl Method {
    /// Misspellings and homoglyphs count against the one-typo-per-word rule.
    pub fn is_typo(self) -> bool {
        matches!(self, Method::Misspelling | Method::Homoglyph)
    }
}

/// One edit: characters `[start, start + len(removed))` become `inserted`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: Kind,
    pub method: Method,
    pub start: usize,
    pub removed: String,
    pub inserted: String,
    /// Token range `[first, last)` for modifications and removals.
    pub tokens: Option<(usize, usize)>,
    pub provenance: String,
}

impl Perturbation {
    /// Edit distance between the removed and inserted text.
    pub fn chars_changed(&self) -> usize {
        strsim::levenshtein(&self.removed, &self.inserted)
    }

    /// Whitespace-separated tokens in the inserted text.
    pub fn payload_tokens(&self) -> usize {
        self.inserted.split_whitespace().count()
    }

    fn check(&self) -> Result<()> {
        let ok = match self.kind {
            Kind::Insert => self.removed.is_empty() && !self.inserted.trim().is_empty(),
            Kind::Modify => self.removed != self.inserted && !self.removed.is_empty(),
            Kind::Remove => self.inserted.is_empty() && !self.removed.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "malformed {:?} perturbation",
                self.kind
            )))
        }
    }
}

/// Replaces `len` characters at char offset `start`.
pub(crate) fn splice(text: &str, start: usize, len: usize, insert: &str) -> String {
    let byte = |n: usize| text.char_indices().nth(n).map_or(text.len(), |(b, _)| b);
    let (a, b) = (byte(start), byte(start + len));
    let mut out = String::with_capacity(text.len() + insert.len());
    out.push_str(&text[..a]);
    out.push_str(insert);
    out.push_str(&text[b..]);
    out
}

fn edit(doc: &Doc, start: usize, expect: &str, replace: &str, what: &str) -> Result<Doc> {
    let n = expect.chars().count();
    if start + n > doc.char_len() || doc.slice(start, start + n) != expect {
        return Err(Error::StaleAnchor(format!(
            "{what}: expected {expect:?} at offset {start}, found {:?}",
            doc.slice(start, (start + n).min(doc.char_len()))
        )));
    }
    Ok(doc.with_text(splice(doc.text(), start, n, replace)))
}

pub fn apply(doc: &Doc, p: &Perturbation) -> Result<Doc> {
    p.check()?;
    edit(doc, p.start, &p.removed, &p.inserted, "apply")
}

pub fn revert(doc: &Doc, p: &Perturbation) -> Result<Doc> {
    p.check()?;
    edit(doc, p.start, &p.inserted, &p.removed, "revert")
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Lexicons {
    pub misspellings: BTreeMap<String, Vec<String>>,
    pub homoglyphs: Vec<(char, char)>,
    pub paraphrases: Vec<(String, String)>,
    pub dispensable: BTreeSet<String>,
    pub templates: Vec<String>,
    /// Value for `<year>` markers.
    pub year: u32,
}

pub const SLOT: &str = "<htp>";
pub const YEAR: &str = "<year>";

impl Lexicons {
    pub fn validate(&self) -> Result<()> {
        for t in &self.templates {
            if !t.contains(SLOT) {
                return Err(Error::format("template", format!("{t:?} has no {SLOT} slot")));
            }
        }
        for (a, b) in &self.homoglyphs {
            if a == b {
                return Err(Error::format("homoglyph map", format!("{a:?} maps to itself")));
            }
        }
        Ok(())
    }
}

/// Strips leading and trailing punctuation: returns the core's char offset
/// within the token and the core itself.
fn core(token: &Token) -> (usize, String) {
    let chars: Vec<char> = token.word.chars().collect();
    let is_p = |c: &char| c.is_ascii_punctuation();
    let lead = chars.iter().take_while(|c| is_p(c)).count();
    let trail = chars[lead..].iter().rev().take_while(|c| is_p(c)).count();
    (lead, chars[lead..chars.len() - trail].iter().collect())
}

/// Lowercase `word` re-cased to follow `like`'s first letter.
fn match_case(word: &str, like: &str) -> String {
    match like.chars().next() {
        Some(c) if c.is_uppercase() => {
            let mut cs = word.chars();
            cs.next()
                .map(|f| f.to_uppercase().chain(cs).collect())
                .unwrap_or_default()
        }
        _ => word.to_string(),
    }
}

fn hsp_tokens(hsps: &[HotSpan]) -> Vec<usize> {
    let mut seen = HashSet::new();
    hsps.iter()
        .flat_map(|s| s.start..s.end)
        .filter(|t| seen.insert(*t))
        .collect()
}

/// Keeps the first candidate per resulting text, up to `m`.
fn dedup_cap(doc: &Doc, cands: impl IntoIterator<Item = Perturbation>, m: usize) -> Vec<Perturbation> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for p in cands {
        if out.len() >= m {
            break;
        }
        let Ok(next) = apply(doc, &p) else { continue };
        if next.text() != doc.text() && seen.insert(next.text().to_string()) {
            out.push(p);
        }
    }
    out
}

fn interleave(mut sources: Vec<Vec<Perturbation>>) -> Vec<Perturbation> {
    let mut out = Vec::new();
    let mut iters: Vec<_> = sources.iter_mut().map(|s| std::mem::take(s).into_iter()).collect();
    loop {
        let mut any = false;
        for it in &mut iters {
            if let Some(p) = it.next() {
                out.push(p);
                any = true;
            }
        }
        if !any {
            return out;
        }
    }
}

fn insertion(start: usize, inserted: String, method: Method, provenance: String) -> Perturbation {
    Perturbation {
        kind: Kind::Insert,
        method,
        start,
        removed: String::new(),
        inserted,
        tokens: None,
        provenance,
    }
}

/// All ordered selections of `n` items.
fn arrangements<'a>(items: &[&'a str], n: usize) -> Vec<Vec<&'a str>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, first) in items.iter().enumerate() {
        let rest: Vec<&str> = items
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, s)| *s)
            .collect();
        for mut tail in arrangements(&rest, n - 1) {
            tail.insert(0, first);
            out.push(tail);
        }
    }
    out
}

fn fill_template(template: &str, htps: &[&str], year: u32) -> String {
    let mut out = template.replace(YEAR, &year.to_string());
    for h in htps {
        out = out.replacen(SLOT, h, 1);
    }
    out
}

/// Spaces a payload from its neighbours at char offset `at`.
fn spaced(doc: &Doc, at: usize, payload: &str) -> String {
    let chars: Vec<char> = doc.text().chars().collect();
    let mut s = payload.trim().to_string();
    if at > 0 && !chars[at - 1].is_whitespace() && !s.starts_with([',', ';', ':', '.']) {
        s.insert(0, ' ');
    }
    if at < chars.len() && !chars[at].is_whitespace() {
        s.push(' ');
    }
    s
}

/// Insertion candidates: single hot training phrases next to each hot
/// span, filled templates after each hot span, and user snippets.
pub fn propose_insertions(
    doc: &Doc,
    hsps: &[HotSpan],
    htps: &[HtpEntry],
    lex: &Lexicons,
    snippets: &[(usize, String)],
    m: usize,
) -> Vec<Perturbation> {
    let tokens = doc.tokens();
    // (offset before, offset after, provenance) per anchor
    let anchors: Vec<(usize, usize, String)> = if hsps.is_empty() {
        vec![(0, doc.char_len(), "text boundary".into())]
    } else {
        hsps.iter()
            .map(|s| {
                (
                    tokens[s.start].start,
                    tokens[s.end - 1].end,
                    format!("hsp {:?}", s.surface),
                )
            })
            .collect()
    };
    let mut singles = Vec::new();
    for h in htps {
        for (before, after, prov) in &anchors {
            let prov = format!("htp {:?} #{} at {prov}", h.phrase, h.rank);
            singles.push(insertion(
                *before,
                spaced(doc, *before, &h.phrase),
                Method::HtpToken,
                prov.clone(),
            ));
            singles.push(insertion(
                *after,
                spaced(doc, *after, &h.phrase),
                Method::HtpToken,
                prov,
            ));
        }
    }
    let top: Vec<&str> = htps.iter().take(3).map(|h| h.phrase.as_str()).collect();
    let mut filled = Vec::new();
    for t in &lex.templates {
        let slots = t.matches(SLOT).count();
        if slots > top.len() {
            continue;
        }
        for pick in arrangements(&top, slots) {
            let text = fill_template(t, &pick, lex.year);
            for (_, after, prov) in &anchors {
                filled.push(insertion(
                    *after,
                    spaced(doc, *after, &text),
                    Method::Parenthetical,
                    format!("template {t:?} with {pick:?} after {prov}"),
                ));
            }
        }
    }
    let users = snippets
        .iter()
        .filter(|(at, _)| *at <= doc.char_len())
        .map(|(at, s)| insertion(*at, spaced(doc, *at, s), Method::UserSnippet, "user snippet".into()))
        .collect();
    dedup_cap(doc, interleave(vec![singles, filled, users]), m)
}

fn overlaps(a: (usize, usize), ranges: &[(usize, usize)]) -> bool {
    ranges.iter().any(|&(s, e)| a.0 < e && s < a.1)
}

/// Misspellings, single homoglyph swaps and paraphrases of hot spans.
/// Words overlapping a `locked` char range already carry a typo.
pub fn propose_modifications(
    doc: &Doc,
    hsps: &[HotSpan],
    lex: &Lexicons,
    locked: &[(usize, usize)],
    m: usize,
) -> Vec<Perturbation> {
    let tokens = doc.tokens();
    let mut misspell = Vec::new();
    let mut glyphs = Vec::new();
    for i in hsp_tokens(hsps) {
        let t = &tokens[i];
        let (lead, word) = core(t);
        if word.is_empty() {
            continue;
        }
        let start = t.start + lead;
        let span = (start, start + word.chars().count());
        if overlaps(span, locked) {
            continue;
        }
        if let Some(list) = lex.misspellings.get(&word.to_lowercase()) {
            for miss in list {
                misspell.push(Perturbation {
                    kind: Kind::Modify,
                    method: Method::Misspelling,
                    start,
                    removed: word.clone(),
                    inserted: match_case(miss, &word),
                    tokens: Some((i, i + 1)),
                    provenance: format!("misspelling {:?} -> {miss:?}", word.to_lowercase()),
                });
            }
        }
        let chars: Vec<char> = word.chars().collect();
        for (pos, c) in chars.iter().enumerate() {
            for &(from, to) in &lex.homoglyphs {
                if *c == from {
                    let mut v = chars.clone();
                    v[pos] = to;
                    glyphs.push(Perturbation {
                        kind: Kind::Modify,
                        method: Method::Homoglyph,
                        start,
                        removed: word.clone(),
                        inserted: v.into_iter().collect(),
                        tokens: Some((i, i + 1)),
                        provenance: format!("homoglyph {from:?} -> {to:?}"),
                    });
                }
            }
        }
    }
    let mut para = Vec::new();
    let lower: Vec<String> = tokens.iter().map(|t| t.word.to_lowercase()).collect();
    for (phrase, repl) in &lex.paraphrases {
        let words: Vec<&str> = phrase.split_whitespace().collect();
        if words.is_empty() || words.len() > lower.len() {
            continue;
        }
        for i in 0..=lower.len() - words.len() {
            let j = i + words.len();
            if !lower[i..j].iter().zip(&words).all(|(a, b)| a == b) {
                continue;
            }
            if !hsps.iter().any(|s| s.start < j && i < s.end) {
                continue;
            }
            let start = tokens[i].start;
            para.push(Perturbation {
                kind: Kind::Modify,
                method: Method::Paraphrase,
                start,
                removed: doc.slice(start, tokens[j - 1].end),
                inserted: match_case(repl, &tokens[i].word),
                tokens: Some((i, j)),
                provenance: format!("paraphrase {phrase:?} -> {repl:?}"),
            });
        }
    }
    dedup_cap(doc, interleave(vec![misspell, glyphs, para]), m)
}

/// Removal of hot span words found in the dispensable lexicon, together
/// with one adjacent space.
pub fn propose_removals(doc: &Doc, hsps: &[HotSpan], lex: &Lexicons, m: usize) -> Vec<Perturbation> {
    let tokens = doc.tokens();
    let chars: Vec<char> = doc.text().chars().collect();
    let cands = hsp_tokens(hsps).into_iter().filter_map(|i| {
        let t = &tokens[i];
        let (_, word) = core(t);
        if !lex.dispensable.contains(&word.to_lowercase()) {
            return None;
        }
        let (start, end) = if chars.get(t.end).is_some_and(|c| c.is_whitespace()) {
            (t.start, t.end + 1)
        } else if t.start > 0 && chars[t.start - 1].is_whitespace() {
            (t.start - 1, t.end)
        } else {
            (t.start, t.end)
        };
        Some(Perturbation {
            kind: Kind::Remove,
            method: Method::DispensableRemoval,
            start,
            removed: chars[start..end].iter().collect(),
            inserted: String::new(),
            tokens: Some((i, i + 1)),
            provenance: format!("dispensable {:?}", word.to_lowercase()),
        })
    });
    dedup_cap(doc, cands, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionCheck {
    /// Directional derivative of the source-class cost along the edit.
    pub source: f64,
    /// Directional derivative of the target-class cost along the edit.
    pub target: f64,
}

impl DirectionCheck {
    /// Source cost rises and target cost falls.
    pub fn passes(&self) -> bool {
        self.source > 0.0 && self.target < 0.0
    }
}

/// Cost gradients of both classes dotted with the change in encoding.
pub fn direction_check(
    h: &ClassifierHandle,
    doc: &Doc,
    p: &Perturbation,
    source: usize,
    target: usize,
) -> Result<DirectionCheck> {
    if p.kind != Kind::Modify {
        return Err(Error::InvalidArgument("direction checks apply to modifications".into()));
    }
    match h.backend() {
        Backend::Char { .. } => {}
        Backend::Word { .. } => return Err(Error::Unsupported("direction checks need a char model".into())),
        Backend::External(_) => return Err(no_gradients()),
    }
    let after = apply(doc, p)?;
    let (before_enc, g_source) = h.input_gradient(doc.text(), source)?;
    let (_, g_target) = h.input_gradient(doc.text(), target)?;
    let after_enc = h.encode(after.text())?;
    let (EncodedInput::CharGrid { grid: x0, .. }, EncodedInput::CharGrid { grid: x1, .. }) = (&before_enc, &after_enc)
    else {
        unreachable!("char backend")
    };
    let dx = x1.sub(x0)?;
    Ok(DirectionCheck {
        source: g_source.dot(&dx)?,
        target: g_target.dot(&dx)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saliency::SpanKind;

    fn span(doc: &Doc, start: usize, end: usize) -> HotSpan {
        let t = doc.tokens();
        HotSpan {
            start,
            end,
            surface: doc.slice(t[start].start, t[end - 1].end),
            score: 1.0,
            kind: if end - start > 1 {
                SpanKind::Phrase
            } else {
                SpanKind::Word
            },
        }
    }

    fn htp(phrase: &str, rank: usize) -> HtpEntry {
        HtpEntry {
            phrase: phrase.into(),
            class: "c".into(),
            frequency: 1,
            rank,
        }
    }

    #[test]
    fn insert_apply_revert() {
        let d = Doc::new("0", "old house", None);
        let p = insertion(0, "historic ".into(), Method::HtpToken, String::new());
        let a = apply(&d, &p).unwrap();
        assert_eq!(a.text(), "historic old house");
        assert_eq!(revert(&a, &p).unwrap().text(), "old house");
        assert!(matches!(revert(&d, &p), Err(Error::StaleAnchor(_))));
    }

    #[test]
    fn htp_before_hsp_start() {
        let d = Doc::new("0", "Momar is a company", None);
        let c = propose_insertions(
            &d,
            &[span(&d, 3, 4)],
            &[htp("historic", 1)],
            &Lexicons::default(),
            &[],
            50,
        );
        assert_eq!(c[0].start, 11);
        assert_eq!(c[0].inserted, "historic ");
        assert_eq!(apply(&d, &c[1]).unwrap().text(), "Momar is a company historic");
    }

    #[test]
    fn template_fills_in_order() {
        let d = Doc::new("0", "Momar is a studio", None);
        let lex = Lexicons {
            templates: vec![", an <htp> <htp> founded in <year>,".into()],
            year: 1996,
            ..Default::default()
        };
        let c = propose_insertions(
            &d,
            &[span(&d, 0, 1)],
            &[htp("entertainment", 1), htp("company", 2)],
            &lex,
            &[],
            50,
        );
        let texts: Vec<String> = c.iter().map(|p| apply(&d, p).unwrap().text().to_string()).collect();
        assert!(texts.contains(&"Momar, an entertainment company founded in 1996, is a studio".to_string()));
    }

    #[test]
    fn empty_hsps_anchor_at_text_ends() {
        let d = Doc::new("0", "a b", None);
        let c = propose_insertions(&d, &[], &[htp("x", 1)], &Lexicons::default(), &[], 50);
        let starts: Vec<usize> = c.iter().map(|p| p.start).collect();
        assert_eq!(starts, [0, 3]);
    }

    #[test]
    fn homoglyph_one_swap_each() {
        let d = Doc::new("0", "lol", None);
        let lex = Lexicons {
            homoglyphs: vec![('l', '1')],
            ..Default::default()
        };
        let c = propose_modifications(&d, &[span(&d, 0, 1)], &lex, &[], 50);
        let outs: Vec<&str> = c.iter().map(|p| p.inserted.as_str()).collect();
        assert_eq!(outs, ["1ol", "lo1"]);
        assert!(propose_modifications(&d, &[span(&d, 0, 1)], &lex, &[(0, 3)], 50).is_empty());
    }

    #[test]
    fn misspelling_keeps_case_and_punctuation() {
        let d = Doc::new("0", "The Film.", None);
        let mut lex = Lexicons::default();
        lex.misspellings.insert("film".into(), vec!["flim".into()]);
        let c = propose_modifications(&d, &[span(&d, 1, 2)], &lex, &[], 50);
        assert_eq!(apply(&d, &c[0]).unwrap().text(), "The Flim.");
        assert_eq!(c[0].chars_changed(), 2);
    }

    #[test]
    fn paraphrase_replaces_phrase() {
        let d = Doc::new("0", "it is different from the rest", None);
        let lex = Lexicons {
            paraphrases: vec![("different from".into(), "not".into())],
            ..Default::default()
        };
        let c = propose_modifications(&d, &[span(&d, 2, 3)], &lex, &[], 50);
        assert_eq!(apply(&d, &c[0]).unwrap().text(), "it is not the rest");
    }

    #[test]
    fn removal_takes_one_space() {
        let d = Doc::new("0", "seven-part British television", None);
        let mut lex = Lexicons::default();
        lex.dispensable.insert("british".into());
        let c = propose_removals(&d, &[span(&d, 0, 3)], &lex, 50);
        assert_eq!(apply(&d, &c[0]).unwrap().text(), "seven-part television");
        let d = Doc::new("0", "British television", None);
        let c = propose_removals(&d, &[span(&d, 0, 1)], &lex, 50);
        assert_eq!(apply(&d, &c[0]).unwrap().text(), "television");
        let d = Doc::new("0", "tv British", None);
        let c = propose_removals(&d, &[span(&d, 1, 2)], &lex, 50);
        assert_eq!(apply(&d, &c[0]).unwrap().text(), "tv");
        lex.dispensable.clear();
        assert!(propose_removals(&d, &[span(&d, 0, 2)], &lex, 50).is_empty());
    }

    #[test]
    fn caps_hold() {
        let d = Doc::new("0", "a b c d e f", None);
        let htps: Vec<HtpEntry> = (0..20).map(|i| htp(&format!("w{i}"), i + 1)).collect();
        let hs: Vec<HotSpan> = (0..6).map(|i| span(&d, i, i + 1)).collect();
        assert_eq!(
            propose_insertions(&d, &hs, &htps, &Lexicons::default(), &[], 7).len(),
            7
        );
    }
}
