//! Interactive crafting sessions: suggest, apply, undo.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use advtext_core::attack::{
    current_hsps, propose, score_candidates, update_locks, AttackConfig, AttackTrace, Counts, Knowledge, Outcome, Step,
    Strategies,
};
use advtext_core::codec::Doc;
use advtext_core::models::{Classifier, ClassifierHandle, ModelKind};
use advtext_core::nn::ConfVector;
use advtext_core::perturb::{apply, direction_check, revert, Kind, Lexicons, Perturbation};
use advtext_core::saliency::HtpTable;
use advtext_core::Result;

use crate::error::ApiError;
use crate::ModelEntry;

/// A scored suggestion; `id` is only valid until the session text changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub perturbation: Perturbation,
    pub conf_after: Vec<f64>,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub model: String,
    pub classes: Vec<String>,
    pub source: String,
    pub target: String,
    pub knowledge: Knowledge,
    pub budget: usize,
    pub original: String,
    pub text: String,
    pub probs: Vec<f64>,
    pub predicted: String,
    pub steps: Vec<Step>,
    pub undo_depth: usize,
    pub version: u64,
}

/// Content hash of a text version and an edit, 16 hex digits.
pub fn candidate_id(version: u64, text: &str, p: &Perturbation) -> String {
    let mut h = Sha256::new();
    h.update(version.to_le_bytes());
    h.update(text.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(p).expect("perturbation serializes"));
    hex::encode(h.finalize())[..16].to_string()
}

struct Counting<'a> {
    inner: &'a ClassifierHandle,
    calls: &'a AtomicU64,
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

pub struct Session {
    pub id: String,
    pub model: String,
    pub config: AttackConfig,
    original: Doc,
    current: Doc,
    source: usize,
    target: usize,
    conf: ConfVector,
    steps: Vec<Step>,
    /// Lock sets in force before each applied step.
    undo: Vec<Vec<(usize, usize)>>,
    locked: Vec<(usize, usize)>,
    version: u64,
    offered: Vec<Candidate>,
    calls: AtomicU64,
}

impl Session {
    pub fn new(id: String, model: &ModelEntry, text: &str, config: AttackConfig) -> Result<Self, ApiError> {
        let h = &model.handle;
        let target = h.class_index(&config.target)?;
        if config.knowledge == Knowledge::White && h.kind() == ModelKind::External {
            return Err(ApiError::Core(advtext_core::Error::Unsupported(
                "no gradients available: white-box sessions need an introspectable model".into(),
            )));
        }
        let conf = h.classify(text)?;
        let doc = Doc::new(id.clone(), text, None);
        Ok(Self {
            id,
            model: h.id.clone(),
            source: conf.argmax(),
            target,
            conf,
            original: doc.clone(),
            current: doc,
            config,
            steps: Vec::new(),
            undo: Vec::new(),
            locked: Vec::new(),
            version: 0,
            offered: Vec::new(),
            calls: AtomicU64::new(1),
        })
    }

    pub fn text(&self) -> &str {
        self.current.text()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn view(&self, model: &ModelEntry) -> SessionView {
        let classes = model.handle.classes().to_vec();
        SessionView {
            id: self.id.clone(),
            model: self.model.clone(),
            source: classes[self.source].clone(),
            target: self.config.target.clone(),
            predicted: classes[self.conf.argmax()].clone(),
            classes,
            knowledge: self.config.knowledge,
            budget: self.config.budget,
            original: self.original.text().to_string(),
            text: self.current.text().to_string(),
            probs: self.conf.probs().to_vec(),
            steps: self.steps.clone(),
            undo_depth: self.undo.len(),
            version: self.version,
        }
    }

    /// Ranked candidates for the current text; replaces any earlier offer.
    pub fn suggest(
        &mut self,
        model: &ModelEntry,
        lex: &Lexicons,
        strategies: Strategies,
        snippets: Vec<(usize, String)>,
    ) -> Result<Vec<Candidate>, ApiError> {
        self.offered.clear();
        if strategies == Strategies::NONE {
            return Ok(Vec::new());
        }
        let cfg = AttackConfig {
            strategies,
            snippets,
            ..self.config.clone()
        };
        let h = &model.handle;
        let counter = Counting {
            inner: h,
            calls: &self.calls,
        };
        let empty = HtpTable {
            classes: Vec::new(),
            entries: Vec::new(),
        };
        let htps = model.htps.as_ref().unwrap_or(&empty);
        let spans = current_hsps(&counter, h, &self.current, &cfg)?;
        let cands = propose(&self.current, &spans, htps, lex, &cfg, &self.locked)?;
        let scored = score_candidates(&counter, &self.current, &self.conf, self.target, cands)?;
        self.offered = scored
            .into_iter()
            .map(|s| Candidate {
                id: candidate_id(self.version, self.current.text(), &s.perturbation),
                perturbation: s.perturbation,
                conf_after: s.conf_after.into_inner(),
                gain: s.gain,
            })
            .collect();
        Ok(self.offered.clone())
    }

    /// Applies a candidate from the latest offer.
    pub fn apply(&mut self, model: &ModelEntry, id: &str) -> Result<ConfVector, ApiError> {
        let Some(cand) = self.offered.iter().find(|c| c.id == id).cloned() else {
            return Err(ApiError::Conflict(format!(
                "candidate `{id}` is not in the latest suggestion for text version {}",
                self.version
            )));
        };
        if self.steps.len() >= self.config.budget {
            return Err(ApiError::Conflict(format!(
                "edit budget of {} is used up",
                self.config.budget
            )));
        }
        let h = &model.handle;
        let p = cand.perturbation;
        let direction = match (p.method.is_typo(), self.config.knowledge, h.kind()) {
            (true, Knowledge::White, ModelKind::Char) => {
                Some(direction_check(h, &self.current, &p, self.source, self.target)?)
            }
            _ => None,
        };
        let next = apply(&self.current, &p)?;
        let conf_after = ConfVector::new(cand.conf_after);
        self.undo.push(self.locked.clone());
        update_locks(&mut self.locked, &p);
        self.steps.push(Step {
            perturbation: p,
            conf_before: std::mem::replace(&mut self.conf, conf_after.clone()),
            conf_after: conf_after.clone(),
            candidates: self.offered.len(),
            direction,
        });
        self.current = next;
        self.version += 1;
        self.offered.clear();
        Ok(conf_after)
    }

    pub fn undo(&mut self) -> Result<ConfVector, ApiError> {
        let (Some(step), Some(locked)) = (self.steps.pop(), self.undo.pop()) else {
            return Err(ApiError::Conflict("nothing to undo".into()));
        };
        self.current = revert(&self.current, &step.perturbation)?;
        self.locked = locked;
        self.conf = step.conf_before;
        self.version += 1;
        self.offered.clear();
        Ok(self.conf.clone())
    }

    /// The session so far as an attack trace.
    pub fn trace(&self, model: &ModelEntry) -> AttackTrace {
        let classes = model.handle.classes();
        let mut counts = Counts::default();
        for s in &self.steps {
            match s.perturbation.kind {
                Kind::Insert => counts.inserted += 1,
                Kind::Modify => counts.modified += 1,
                Kind::Remove => counts.removed += 1,
            }
        }
        let outcome = if self.conf.argmax() == self.target {
            Outcome::Success
        } else if self.steps.len() >= self.config.budget {
            Outcome::BudgetExhausted
        } else {
            Outcome::NoImprovingCandidate
        };
        AttackTrace {
            original: self.original.clone(),
            source: classes[self.source].clone(),
            target: self.config.target.clone(),
            knowledge: self.config.knowledge,
            steps: self.steps.clone(),
            outcome,
            final_text: self.current.text().to_string(),
            final_conf: self.conf.clone(),
            counts,
            classifications: self.calls.load(Ordering::Relaxed),
        }
    }
}
