//! Greedy source/target attacks, campaigns and the white/black overlap study.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::codec::Doc;
use crate::error::{Error, Result};
use crate::models::{Classifier, ClassifierHandle, ModelKind};
use crate::nn::ConfVector;
use crate::occlusion::hsps_black;
use crate::perturb::{
    apply, direction_check, propose_insertions, propose_modifications, propose_removals, DirectionCheck, Kind,
    Lexicons, Perturbation,
};
use crate::saliency::{hsps, normalize_phrase, HotSpan, HtpTable, SaliencyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Knowledge {
    White,
    Black,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategies {
    pub insert: bool,
    pub modify: bool,
    pub remove: bool,
}

impl Strategies {
    pub const ALL: Strategies = Strategies {
        insert: true,
        modify: true,
        remove: true,
    };
    pub const NONE: Strategies = Strategies {
        insert: false,
        modify: false,
        remove: false,
    };

    /// Parses a comma-separated subset of `insert,modify,remove`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut out = Self::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "insert" => out.insert = true,
                "modify" => out.modify = true,
                "remove" => out.remove = true,
                other => return Err(Error::InvalidArgument(format!("unknown strategy `{other}`"))),
            }
        }
        Ok(out)
    }
}

impl std::fmt::Display for Strategies {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = [
            (self.insert, "insert"),
            (self.modify, "modify"),
            (self.remove, "remove"),
        ]
        .into_iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| n)
        .collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub target: String,
    pub budget: usize,
    /// Candidate cap per strategy and step.
    pub cap: usize,
    pub min_gain: f64,
    pub knowledge: Knowledge,
    pub strategies: Strategies,
    pub saliency: SaliencyConfig,
    /// Hot tokens kept per step in black mode.
    pub black_k: usize,
    pub snippets: Vec<(usize, String)>,
}

impl AttackConfig {
    pub fn new(target: impl Into<String>) -> Self {
        Self {
            target: target.into(),
            budget: 5,
            cap: 50,
            min_gain: 1e-4,
            knowledge: Knowledge::White,
            strategies: Strategies::ALL,
            saliency: SaliencyConfig::default(),
            black_k: 3,
            snippets: Vec::new(),
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn validate(&self) -> Result<()> {
        // negated so that a NaN gain threshold is rejected too
        if self.budget == 0 || self.cap == 0 || !(self.min_gain > 0.0) {
            return Err(Error::InvalidArgument(
                "budget and candidate cap must be at least 1 and min gain positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Success,
    BudgetExhausted,
    NoImprovingCandidate,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::Success => "success",
            Outcome::BudgetExhausted => "budget-exhausted",
            Outcome::NoImprovingCandidate => "no-improving-candidate",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub perturbation: Perturbation,
    pub conf_before: ConfVector,
    pub conf_after: ConfVector,
    pub candidates: usize,
    /// Set for typo modifications on char models in white mode.
    pub direction: Option<DirectionCheck>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub inserted: usize,
    pub modified: usize,
    pub removed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackTrace {
    pub original: Doc,
    pub source: String,
    pub target: String,
    pub knowledge: Knowledge,
    pub steps: Vec<Step>,
    pub outcome: Outcome,
    pub final_text: String,
    pub final_conf: ConfVector,
    pub counts: Counts,
    /// Classifications issued, including occlusion probes.
    pub classifications: u64,
}

impl AttackTrace {
    /// Character edit distance between original and final text.
    pub fn chars_changed(&self) -> usize {
        strsim::levenshtein(self.original.text(), &self.final_text)
    }
}

/// Classifier wrapper that counts calls.
struct Counting<'a> {
    inner: &'a ClassifierHandle,
    calls: AtomicU64,
}

impl Classifier for Counting<'_> {
    fn class_names(&self) -> &[String] {
        self.inner.classes()
    }

    fn classify(&self, text: &str) -> Result<ConfVector> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.classify(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub perturbation: Perturbation,
    pub conf_after: ConfVector,
    pub gain: f64,
    /// Position in generation order.
    pub order: usize,
}

fn kind_rank(k: Kind) -> u8 {
    match k {
        Kind::Insert => 0,
        Kind::Modify => 1,
        Kind::Remove => 2,
    }
}

/// Total preference order: larger gain, fewer changed characters,
/// insert < modify < remove, earlier anchor, earlier generation.
pub fn better(a: &Scored, b: &Scored) -> std::cmp::Ordering {
    b.gain
        .total_cmp(&a.gain)
        .then(a.perturbation.chars_changed().cmp(&b.perturbation.chars_changed()))
        .then(kind_rank(a.perturbation.kind).cmp(&kind_rank(b.perturbation.kind)))
        .then(a.perturbation.start.cmp(&b.perturbation.start))
        .then(a.order.cmp(&b.order))
}

/// Candidates of all enabled strategies, in generation order.
pub fn propose(
    doc: &Doc,
    spans: &[HotSpan],
    htps: &HtpTable,
    lex: &Lexicons,
    cfg: &AttackConfig,
    locked: &[(usize, usize)],
) -> Result<Vec<Perturbation>> {
    let mut out = Vec::new();
    if cfg.strategies.insert {
        out.extend(propose_insertions(
            doc,
            spans,
            htps.require(&cfg.target)?,
            lex,
            &cfg.snippets,
            cfg.cap,
        ));
    }
    if cfg.strategies.modify {
        out.extend(propose_modifications(doc, spans, lex, locked, cfg.cap));
    }
    if cfg.strategies.remove {
        out.extend(propose_removals(doc, spans, lex, cfg.cap));
    }
    Ok(out)
}

/// Classifies every candidate and sorts best first.
pub fn score_candidates(
    h: &dyn Classifier,
    doc: &Doc,
    before: &ConfVector,
    target: usize,
    cands: Vec<Perturbation>,
) -> Result<Vec<Scored>> {
    let texts = cands.iter().map(|p| apply(doc, p)).collect::<Result<Vec<_>>>()?;
    let confs = crate::par::map(&texts, |d| h.classify(d.text()));
    let mut scored = cands
        .into_iter()
        .zip(confs)
        .enumerate()
        .map(|(order, (perturbation, conf))| {
            let conf_after = conf?;
            Ok(Scored {
                gain: conf_after.get(target) - before.get(target),
                perturbation,
                conf_after,
                order,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(better);
    Ok(scored)
}

/// Moves locked ranges along with an edit; ranges whose text is replaced
/// are dropped.
fn shift_locks(locked: &mut Vec<(usize, usize)>, p: &Perturbation) {
    let (a, b) = (p.start, p.start + p.removed.chars().count());
    let delta = p.inserted.chars().count() as isize - (b - a) as isize;
    let moved = |x: usize| (x as isize + delta) as usize;
    locked.retain(|&(s, e)| a == b || !(a < e && s < b));
    for (s, e) in locked.iter_mut() {
        if a == b {
            // pure insertion at a
            if a <= *s {
                (*s, *e) = (moved(*s), moved(*e));
            } else if a < *e {
                *e = moved(*e);
            }
        } else if *s >= b {
            (*s, *e) = (moved(*s), moved(*e));
        }
    }
}

/// Applies an accepted edit to the typo-locked ranges: shifts them and
/// locks the edited word if the edit was a typo.
pub fn update_locks(locked: &mut Vec<(usize, usize)>, p: &Perturbation) {
    shift_locks(locked, p);
    if p.method.is_typo() {
        locked.push((p.start, p.start + p.inserted.chars().count()));
    }
}

/// Hot spans for the current text under the configured knowledge mode.
pub fn current_hsps(
    h: &dyn Classifier,
    handle: &ClassifierHandle,
    doc: &Doc,
    cfg: &AttackConfig,
) -> Result<Vec<HotSpan>> {
    match cfg.knowledge {
        Knowledge::White => hsps(handle, doc, &cfg.saliency),
        Knowledge::Black => hsps_black(h, doc, cfg.black_k),
    }
}

pub fn attack(
    h: &ClassifierHandle,
    doc: &Doc,
    htps: &HtpTable,
    lex: &Lexicons,
    cfg: &AttackConfig,
) -> Result<AttackTrace> {
    cfg.validate()?;
    let target = h.class_index(&cfg.target)?;
    if cfg.strategies.insert {
        htps.require(&cfg.target)?;
    }
    let counter = Counting {
        inner: h,
        calls: AtomicU64::new(0),
    };
    let mut conf = counter.classify(doc.text())?;
    let source = conf.argmax();
    let mut current = doc.clone();
    let mut steps = Vec::new();
    let mut counts = Counts::default();
    let mut locked: Vec<(usize, usize)> = Vec::new();
    let outcome = loop {
        if conf.argmax() == target {
            break Outcome::Success;
        }
        if steps.len() >= cfg.budget {
            break Outcome::BudgetExhausted;
        }
        let spans = current_hsps(&counter, h, &current, cfg)?;
        let cands = propose(&current, &spans, htps, lex, cfg, &locked)?;
        let n = cands.len();
        let scored = score_candidates(&counter, &current, &conf, target, cands)?;
        let Some(best) = scored.into_iter().next().filter(|b| b.gain > cfg.min_gain) else {
            break Outcome::NoImprovingCandidate;
        };
        let p = best.perturbation;
        let direction = match (p.method.is_typo(), cfg.knowledge, h.kind()) {
            (true, Knowledge::White, ModelKind::Char) => Some(direction_check(h, &current, &p, source, target)?),
            _ => None,
        };
        match p.kind {
            Kind::Insert => counts.inserted += 1,
            Kind::Modify => counts.modified += 1,
            Kind::Remove => counts.removed += 1,
        }
        update_locks(&mut locked, &p);
        current = apply(&current, &p)?;
        steps.push(Step {
            perturbation: p,
            conf_before: conf,
            conf_after: best.conf_after.clone(),
            candidates: n,
            direction,
        });
        conf = best.conf_after;
    };
    Ok(AttackTrace {
        original: doc.clone(),
        source: h.classes()[source].clone(),
        target: cfg.target.clone(),
        knowledge: cfg.knowledge,
        steps,
        outcome,
        final_text: current.text().to_string(),
        final_conf: conf,
        counts,
        classifications: counter.calls.load(Ordering::Relaxed),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRow {
    pub doc_id: String,
    pub source: String,
    pub target: String,
    pub source_conf: f64,
    pub target_conf_before: f64,
    pub target_conf_after: f64,
    pub inserted: usize,
    pub modified: usize,
    pub removed: usize,
    pub outcome: Outcome,
    pub chars_changed: usize,
    pub doc_chars: usize,
    pub classifications: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub rows: Vec<CampaignRow>,
    /// `None` when there are no rows.
    pub success_rate: Option<f64>,
    pub avg_inserted: Option<f64>,
    pub avg_modified: Option<f64>,
    pub avg_removed: Option<f64>,
}

impl CampaignReport {
    pub fn from_rows(rows: Vec<CampaignRow>) -> Self {
        let n = rows.len() as f64;
        let avg = |f: &dyn Fn(&CampaignRow) -> f64| (!rows.is_empty()).then(|| rows.iter().map(f).sum::<f64>() / n);
        Self {
            success_rate: avg(&|r| f64::from(u8::from(r.outcome == Outcome::Success))),
            avg_inserted: avg(&|r| r.inserted as f64),
            avg_modified: avg(&|r| r.modified as f64),
            avg_removed: avg(&|r| r.removed as f64),
            rows,
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "doc_id",
            "source",
            "target",
            "source_conf",
            "target_conf_before",
            "target_conf_after",
            "inserted",
            "modified",
            "removed",
            "outcome",
            "chars_changed",
            "doc_chars",
            "classifications",
        ])
        .map_err(|e| Error::format("campaign csv", e.to_string()))?;
        for r in &self.rows {
            w.write_record([
                r.doc_id.clone(),
                r.source.clone(),
                r.target.clone(),
                format!("{:.6}", r.source_conf),
                format!("{:.6}", r.target_conf_before),
                format!("{:.6}", r.target_conf_after),
                r.inserted.to_string(),
                r.modified.to_string(),
                r.removed.to_string(),
                r.outcome.to_string(),
                r.chars_changed.to_string(),
                r.doc_chars.to_string(),
                r.classifications.to_string(),
            ])
            .map_err(|e| Error::format("campaign csv", e.to_string()))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::format("campaign csv", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<8} {:<16} {:>8} {:<16} {:>8} {:>4} {:>4} {:>4}  {}\n",
            "doc", "source", "conf", "target", "conf", "ins", "mod", "rem", "outcome"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<8} {:<16} {:>7.1}% {:<16} {:>7.1}% {:>4} {:>4} {:>4}  {}\n",
                r.doc_id,
                r.source,
                100.0 * r.source_conf,
                r.target,
                100.0 * r.target_conf_after,
                r.inserted,
                r.modified,
                r.removed,
                r.outcome
            ));
        }
        match (
            self.success_rate,
            self.avg_inserted,
            self.avg_modified,
            self.avg_removed,
        ) {
            (Some(s), Some(i), Some(m), Some(r)) => out.push_str(&format!(
                "Avg. {:>62.1} {:>4.1} {:>4.1}  success {:.1}% of {}\n",
                i,
                m,
                r,
                100.0 * s,
                self.rows.len()
            )),
            _ => out.push_str("no attacks run; success rate undefined\n"),
        }
        out
    }
}

/// Docs labeled and predicted as `source`, in input order.
pub fn select_docs<'a>(h: &ClassifierHandle, docs: &'a [Doc], source: &str, n: usize) -> Result<Vec<&'a Doc>> {
    let si = h.class_index(source)?;
    let ok = crate::par::map(docs, |d| -> Result<bool> {
        Ok(d.label.as_deref() == Some(source) && h.classify(d.text())?.argmax() == si)
    });
    let mut out = Vec::new();
    for (d, ok) in docs.iter().zip(ok) {
        if out.len() == n {
            break;
        }
        if ok? {
            out.push(d);
        }
    }
    Ok(out)
}

/// One attack per selected doc and `(source, target)` pair.
pub fn run_campaign(
    h: &ClassifierHandle,
    docs: &[Doc],
    pairs: &[(String, String)],
    per_pair: usize,
    htps: &HtpTable,
    lex: &Lexicons,
    base: &AttackConfig,
) -> Result<(CampaignReport, Vec<AttackTrace>)> {
    let mut jobs = Vec::new();
    for (source, target) in pairs {
        h.class_index(target)?;
        for d in select_docs(h, docs, source, per_pair)? {
            jobs.push((d, target.clone()));
        }
    }
    let traces = crate::par::map(&jobs, |(d, target)| {
        let cfg = AttackConfig {
            target: target.clone(),
            ..base.clone()
        };
        attack(h, d, htps, lex, &cfg)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let rows = traces
        .iter()
        .map(|t| {
            let si = h.class_index(&t.source).expect("own class");
            let ti = h.class_index(&t.target).expect("own class");
            let first = t.steps.first().map_or(&t.final_conf, |s| &s.conf_before);
            CampaignRow {
                doc_id: t.original.id.clone(),
                source: t.source.clone(),
                target: t.target.clone(),
                source_conf: first.get(si),
                target_conf_before: first.get(ti),
                target_conf_after: t.final_conf.get(ti),
                inserted: t.counts.inserted,
                modified: t.counts.modified,
                removed: t.counts.removed,
                outcome: t.outcome,
                chars_changed: t.chars_changed(),
                doc_chars: t.original.char_len(),
                classifications: t.classifications,
            }
        })
        .collect();
    Ok((CampaignReport::from_rows(rows), traces))
}

/// All ordered pairs of distinct classes.
pub fn all_pairs(classes: &[String]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for s in classes {
        for t in classes {
            if s != t {
                out.push((s.clone(), t.clone()));
            }
        }
    }
    out
}

/// Per class, how many of the top-`n` phrases the two tables share.
pub fn overlap_study(white: &HtpTable, black: &HtpTable, n: usize) -> Result<Vec<(String, usize)>> {
    let a: BTreeSet<&String> = white.classes.iter().collect();
    let b: BTreeSet<&String> = black.classes.iter().collect();
    if a != b {
        return Err(Error::InvalidArgument(format!(
            "tables cover different classes: {:?} vs {:?}",
            white.classes, black.classes
        )));
    }
    let top = |t: &HtpTable, c: &str| -> BTreeSet<String> {
        t.get(c)
            .unwrap_or_default()
            .iter()
            .take(n)
            .map(|e| normalize_phrase(&e.phrase))
            .collect()
    };
    Ok(white
        .classes
        .iter()
        .map(|c| (c.clone(), top(white, c).intersection(&top(black, c)).count()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::Method;

    fn p(kind: Kind, start: usize, removed: &str, inserted: &str) -> Perturbation {
        Perturbation {
            kind,
            method: Method::HtpToken,
            start,
            removed: removed.into(),
            inserted: inserted.into(),
            tokens: None,
            provenance: String::new(),
        }
    }

    fn scored(gain: f64, pert: Perturbation, order: usize) -> Scored {
        Scored {
            perturbation: pert,
            conf_after: ConfVector::uniform(2),
            gain,
            order,
        }
    }

    #[test]
    fn tie_break_order() {
        let a = scored(0.5, p(Kind::Insert, 9, "", "abc "), 0);
        let b = scored(0.5, p(Kind::Modify, 0, "ab", "ba"), 1);
        let c = scored(0.5, p(Kind::Insert, 3, "", "ab"), 2);
        let d = scored(0.6, p(Kind::Remove, 5, "long word ", ""), 3);
        let mut v = [a.clone(), b.clone(), c.clone(), d.clone()];
        v.sort_by(better);
        let orders: Vec<usize> = v.iter().map(|s| s.order).collect();
        // d wins on gain; c and b change 2 chars, insert first; a changes 4
        assert_eq!(orders, [3, 2, 1, 0]);
    }

    #[test]
    fn locks_follow_edits() {
        let mut locks = vec![(10, 14)];
        shift_locks(&mut locks, &p(Kind::Insert, 0, "", "abc "));
        assert_eq!(locks, [(14, 18)]);
        shift_locks(&mut locks, &p(Kind::Insert, 20, "", "x "));
        assert_eq!(locks, [(14, 18)]);
        shift_locks(&mut locks, &p(Kind::Remove, 13, "abcd ", ""));
        assert!(locks.is_empty());
    }

    #[test]
    fn strategies_parse() {
        assert_eq!(Strategies::parse("insert,remove").unwrap().to_string(), "insert,remove");
        assert_eq!(Strategies::parse("").unwrap(), Strategies::NONE);
        assert!(Strategies::parse("fly").is_err());
    }

    #[test]
    fn empty_campaign_has_undefined_rate() {
        let r = CampaignReport::from_rows(Vec::new());
        assert_eq!(r.success_rate, None);
        assert!(r.render().contains("undefined"));
    }

    #[test]
    fn identical_tables_overlap_fully() {
        let classes = vec!["a".to_string(), "b".to_string()];
        let mut c = std::collections::BTreeMap::new();
        for w in ["x", "y", "z"] {
            c.insert(w.to_string(), 1);
        }
        let t = HtpTable::from_counts(&classes, &[c.clone(), c], 10);
        assert_eq!(
            overlap_study(&t, &t, 3).unwrap(),
            vec![("a".into(), 3), ("b".into(), 3)]
        );
        let other = HtpTable::from_counts(&classes[..1], &[Default::default()], 10);
        assert!(overlap_study(&t, &other, 3).is_err());
    }
}
