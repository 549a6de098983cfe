//! Black-box probing by whitespace occlusion of one token at a time.

use serde::{Deserialize, Serialize};

use crate::codec::Doc;
use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::nn::ConfVector;
use crate::saliency::{
    assemble_phrases, labeled_class, normalize_phrase, tally, top_k, HotSpan, MinedHtps, PhraseDump,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub token: usize,
    pub text: String,
}

/// One probe per token: the token's characters replaced by spaces.
pub fn gen_probes(doc: &Doc) -> Vec<Probe> {
    let chars: Vec<char> = doc.text().chars().collect();
    doc.tokens()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut c = chars.clone();
            c[t.start..t.end].iter_mut().for_each(|x| *x = ' ');
            Probe {
                token: i,
                text: c.into_iter().collect(),
            }
        })
        .collect()
}

/// `index<TAB>probe text` per line.
pub fn render_probe_dump(probes: &[Probe]) -> String {
    probes.iter().map(|p| format!("{}\t{}\n", p.token, p.text)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationTable {
    pub seed: ConfVector,
    /// The seed's predicted class.
    pub class: usize,
    /// Seed confidence of `class` minus the probe's, per token.
    pub deviations: Vec<f64>,
    pub probes: Vec<ConfVector>,
}

/// Classifies the seed once and every probe once.
pub fn deviations(h: &dyn Classifier, doc: &Doc) -> Result<DeviationTable> {
    let order: Vec<usize> = (0..doc.tokens().len()).collect();
    deviations_in_order(h, doc, &order)
}

/// As [`deviations`], evaluating probes in the given permutation of token
/// indices. The result does not depend on the order.
pub fn deviations_in_order(h: &dyn Classifier, doc: &Doc, order: &[usize]) -> Result<DeviationTable> {
    let probes = gen_probes(doc);
    let mut seen = vec![false; probes.len()];
    for &i in order {
        if i >= probes.len() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidArgument("probe order is not a permutation".into()));
        }
    }
    if order.len() != probes.len() {
        return Err(Error::InvalidArgument("probe order is not a permutation".into()));
    }
    let seed = h.classify(doc.text())?;
    let class = seed.argmax();
    let confs =
        crate::par::try_map(order, |&i| h.classify(&probes[i].text)).map_err(|(pos, e)| Error::ProbeFailed {
            token: order[pos],
            source: Box::new(e),
        })?;
    let mut slots: Vec<Option<ConfVector>> = vec![None; probes.len()];
    for (&i, c) in order.iter().zip(confs) {
        slots[i] = Some(c);
    }
    let probes: Vec<ConfVector> = slots.into_iter().map(|c| c.expect("permutation")).collect();
    let deviations = probes.iter().map(|p| seed.get(class) - p.get(class)).collect();
    Ok(DeviationTable {
        seed,
        class,
        deviations,
        probes,
    })
}

/// Top-`k` tokens by signed deviation (ties: earlier token), merged into
/// spans where adjacent.
pub fn hsps_from_table(doc: &Doc, table: &DeviationTable, k: usize) -> Vec<HotSpan> {
    let words: Vec<(usize, f64)> = top_k(&table.deviations, k)
        .into_iter()
        .map(|i| (i, table.deviations[i]))
        .collect();
    assemble_phrases(doc, &words)
}

pub fn hsps_black(h: &dyn Classifier, doc: &Doc, k: usize) -> Result<Vec<HotSpan>> {
    if doc.tokens().is_empty() {
        return Ok(Vec::new());
    }
    Ok(hsps_from_table(doc, &deviations(h, doc)?, k))
}

/// The highest-deviation token whose normalized form is nonempty.
pub fn top_word(doc: &Doc, table: &DeviationTable) -> Option<String> {
    top_k(&table.deviations, table.deviations.len())
        .into_iter()
        .map(|i| normalize_phrase(&doc.tokens()[i].word))
        .find(|w| !w.is_empty())
}

/// One hot word per training sample, counted toward its label.
pub fn mine_htps_black(h: &dyn Classifier, docs: &[Doc], top_n: usize) -> Result<MinedHtps> {
    if docs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = h.class_names().to_vec();
    let mut dump = Vec::with_capacity(docs.len());
    // probes inside each doc already run in parallel
    for d in docs {
        let class = labeled_class(h, d)?;
        let phrases = if d.tokens().is_empty() {
            Vec::new()
        } else {
            top_word(d, &deviations(h, d)?).into_iter().collect()
        };
        dump.push(PhraseDump {
            id: d.id.clone(),
            class: classes[class].clone(),
            phrases,
        });
    }
    Ok(MinedHtps {
        table: tally(&classes, &dump, top_n),
        dump,
    })
}
