//! On-disk formats: datasets, checkpoints, HTP tables, traces, lexicons,
//! phrase dumps and the INI settings file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::AttackTrace;
use crate::codec::{Alphabet, Doc, Vocabulary};
use crate::error::{Error, Result};
use crate::models::{Backend, ClassifierHandle};
use crate::nn::{LayerSpec, Network, Tensor};
use crate::perturb::Lexicons;
use crate::saliency::{HtpEntry, HtpTable, PhraseDump};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

// ---- datasets

/// Parses `label,text` CSV. Ids are 1-based data row numbers.
pub fn parse_dataset(content: &str) -> Result<Vec<Doc>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(content.as_bytes());
    let header = rdr.headers().map_err(|e| Error::format("dataset", e.to_string()))?;
    if header.len() != 2 || &header[0] != "label" || &header[1] != "text" {
        return Err(Error::format("dataset", "header must be `label,text`"));
    }
    let mut docs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::MalformedRow {
            row,
            detail: e.to_string(),
        })?;
        if rec.len() != 2 {
            return Err(Error::MalformedRow {
                row,
                detail: format!("{} fields, expected 2", rec.len()),
            });
        }
        if rec[0].is_empty() {
            return Err(Error::MalformedRow {
                row,
                detail: "empty label".into(),
            });
        }
        docs.push(Doc::new(row.to_string(), &rec[1], Some(rec[0].to_string())));
    }
    Ok(docs)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Doc>> {
    parse_dataset(&read_text(path)?)
}

/// Writes docs in order; every doc needs a label.
pub fn dataset_to_string(docs: &[Doc]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::format("dataset", e.to_string());
    w.write_record(["label", "text"]).map_err(fail)?;
    for d in docs {
        let label = d
            .label
            .as_deref()
            .filter(|l| !l.is_empty())
            .ok_or_else(|| Error::InvalidArgument(format!("doc {} has no label", d.id)))?;
        w.write_record([label, d.text()]).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format("dataset", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 input"))
}

pub fn save_dataset(path: &Path, docs: &[Doc]) -> Result<()> {
    write_text(path, &dataset_to_string(docs)?)
}

// ---- checkpoints

const MAGIC: &[u8; 8] = b"ADVTXTCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum CodecManifest {
    Char {
        alphabet: String,
        len: usize,
    },
    /// Vocabulary words after the reserved unknown row.
    Word {
        words: Vec<String>,
        len: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    id: String,
    classes: Vec<String>,
    codec: CodecManifest,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
}

/// Serializes a char or word model. Imported embedding vectors live in the
/// network's parameters, so the vocabulary keeps only its words.
pub fn checkpoint_to_bytes(h: &ClassifierHandle) -> Result<Vec<u8>> {
    let (codec, net) = match h.backend() {
        Backend::Char { alphabet, len, net } => (
            CodecManifest::Char {
                alphabet: alphabet.chars().iter().collect(),
                len: *len,
            },
            net,
        ),
        Backend::Word { vocab, len, net } => (
            CodecManifest::Word {
                words: vocab.words()[1..].to_vec(),
                len: *len,
            },
            net,
        ),
        Backend::External(_) => return Err(Error::Unsupported("external oracles have no checkpoint".into())),
    };
    let manifest = Manifest {
        version: CHECKPOINT_VERSION,
        id: h.id.clone(),
        classes: h.classes().to_vec(),
        codec,
        input_shape: net.input_shape().to_vec(),
        layers: net.layers().to_vec(),
        shapes: net.param_shapes(),
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let floats: usize = net.params().iter().map(Tensor::len).sum();
    let mut out = Vec::with_capacity(12 + json.len() + 8 * floats);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in net.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<ClassifierHandle> {
    if bytes.len() < MAGIC.len() + 4 {
        return Err(Error::Truncated(format!("{} bytes, no header", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let mlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() < mlen {
        return Err(Error::Truncated(format!(
            "manifest needs {mlen} bytes, {} present",
            body.len()
        )));
    }
    let raw: serde_json::Value =
        serde_json::from_slice(&body[..mlen]).map_err(|e| Error::format("checkpoint manifest", e.to_string()))?;
    let found = raw
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::format("checkpoint manifest", "no version"))?;
    if found != CHECKPOINT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: found as u32,
            expected: CHECKPOINT_VERSION,
        });
    }
    let m: Manifest = serde_json::from_value(raw).map_err(|e| Error::format("checkpoint manifest", e.to_string()))?;
    let data = &body[mlen..];
    let need: usize = m.shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if data.len() < need * 8 {
        return Err(Error::Truncated(format!(
            "parameters need {} bytes, {} present",
            need * 8,
            data.len()
        )));
    }
    if data.len() > need * 8 {
        return Err(Error::CheckpointShape(format!(
            "{} trailing bytes",
            data.len() - need * 8
        )));
    }
    let mut floats = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let params = m
        .shapes
        .iter()
        .map(|s| Tensor::new(s.clone(), floats.by_ref().take(s.iter().product()).collect()))
        .collect::<Result<Vec<_>>>()?;
    let net = Network::from_parts(m.input_shape, m.layers, params)?;
    let backend = match m.codec {
        CodecManifest::Char { alphabet, len } => Backend::Char {
            alphabet: Alphabet::new(alphabet.chars().collect())?,
            len,
            net,
        },
        CodecManifest::Word { words, len } => Backend::Word {
            vocab: Vocabulary::from_words(words)?,
            len,
            net,
        },
    };
    ClassifierHandle::from_backend(m.id, m.classes, backend)
}

pub fn save_checkpoint(path: &Path, h: &ClassifierHandle) -> Result<()> {
    let bytes = checkpoint_to_bytes(h)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ClassifierHandle> {
    checkpoint_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

// ---- HTP tables

#[derive(Serialize, Deserialize)]
struct HtpFile {
    classes: Vec<HtpClass>,
}

#[derive(Serialize, Deserialize)]
struct HtpClass {
    class: String,
    phrases: Vec<HtpRow>,
}

#[derive(Serialize, Deserialize)]
struct HtpRow {
    phrase: String,
    frequency: u64,
}

/// JSON document; ranks are implied by order.
pub fn htp_to_string(t: &HtpTable) -> String {
    let file = HtpFile {
        classes: t
            .classes
            .iter()
            .zip(&t.entries)
            .map(|(c, es)| HtpClass {
                class: c.clone(),
                phrases: es
                    .iter()
                    .map(|e| HtpRow {
                        phrase: e.phrase.clone(),
                        frequency: e.frequency,
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("htp table serializes") + "\n"
}

pub fn htp_from_str(s: &str) -> Result<HtpTable> {
    let file: HtpFile = serde_json::from_str(s).map_err(|e| Error::format("HTP table", e.to_string()))?;
    let mut classes = Vec::new();
    let mut entries = Vec::new();
    for c in file.classes {
        if classes.contains(&c.class) {
            return Err(Error::format("HTP table", format!("class {:?} listed twice", c.class)));
        }
        if c.phrases.windows(2).any(|w| w[1].frequency > w[0].frequency) {
            return Err(Error::format(
                "HTP table",
                format!("frequencies of {:?} increase", c.class),
            ));
        }
        entries.push(
            c.phrases
                .into_iter()
                .enumerate()
                .map(|(i, r)| HtpEntry {
                    phrase: r.phrase,
                    class: c.class.clone(),
                    frequency: r.frequency,
                    rank: i + 1,
                })
                .collect(),
        );
        classes.push(c.class);
    }
    Ok(HtpTable { classes, entries })
}

pub fn save_htp(path: &Path, t: &HtpTable) -> Result<()> {
    write_text(path, &htp_to_string(t))
}

pub fn load_htp(path: &Path) -> Result<HtpTable> {
    htp_from_str(&read_text(path)?)
}

// ---- traces and phrase dumps

pub fn trace_to_string(t: &AttackTrace) -> String {
    serde_json::to_string_pretty(t).expect("trace serializes") + "\n"
}

pub fn trace_from_str(s: &str) -> Result<AttackTrace> {
    serde_json::from_str(s).map_err(|e| Error::format("trace", e.to_string()))
}

pub fn save_trace(path: &Path, t: &AttackTrace) -> Result<()> {
    write_text(path, &trace_to_string(t))
}

pub fn load_trace(path: &Path) -> Result<AttackTrace> {
    trace_from_str(&read_text(path)?)
}

/// One JSON object per line.
pub fn dump_to_string(dump: &[PhraseDump]) -> String {
    dump.iter()
        .map(|d| serde_json::to_string(d).expect("dump serializes") + "\n")
        .collect()
}

pub fn dump_from_str(s: &str) -> Result<Vec<PhraseDump>> {
    s.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::format("phrase dump", format!("line {}: {e}", n + 1))))
        .collect()
}

// ---- lexicons

pub const MISSPELLINGS_FILE: &str = "misspellings.tsv";
pub const HOMOGLYPHS_FILE: &str = "homoglyphs.tsv";
pub const PARAPHRASES_FILE: &str = "paraphrases.tsv";
pub const DISPENSABLE_FILE: &str = "dispensable.txt";
pub const TEMPLATES_FILE: &str = "templates.txt";

fn lines(s: &str) -> impl Iterator<Item = (usize, &str)> {
    s.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn pair<'a>(what: &'static str, n: usize, l: &'a str) -> Result<(&'a str, &'a str)> {
    match l.split_once('\t') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() && !b.contains('\t') => Ok((a, b)),
        _ => Err(Error::format(
            what,
            format!("line {n}: expected two tab-separated fields"),
        )),
    }
}

/// `correct<TAB>miss1,miss2,...` per line.
pub fn parse_misspellings(s: &str) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out = BTreeMap::new();
    for (n, l) in lines(s) {
        let (word, miss) = pair("misspelling corpus", n, l)?;
        let list: Vec<String> = miss.split(',').map(str::to_string).collect();
        if list.iter().any(String::is_empty) {
            return Err(Error::format(
                "misspelling corpus",
                format!("line {n}: empty misspelling"),
            ));
        }
        if out.insert(word.to_string(), list).is_some() {
            return Err(Error::format(
                "misspelling corpus",
                format!("line {n}: {word:?} repeated"),
            ));
        }
    }
    Ok(out)
}

pub fn parse_homoglyphs(s: &str) -> Result<Vec<(char, char)>> {
    lines(s)
        .map(|(n, l)| {
            let (a, b) = pair("homoglyph map", n, l)?;
            let one = |x: &str| {
                let mut it = x.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Ok(c),
                    _ => Err(Error::format(
                        "homoglyph map",
                        format!("line {n}: {x:?} is not one character"),
                    )),
                }
            };
            Ok((one(a)?, one(b)?))
        })
        .collect()
}

pub fn parse_paraphrases(s: &str) -> Result<Vec<(String, String)>> {
    lines(s)
        .map(|(n, l)| pair("paraphrase table", n, l).map(|(a, b)| (a.to_string(), b.to_string())))
        .collect()
}

/// Writes the five lexicon files into `dir`.
pub fn save_lexicons(dir: &Path, lex: &Lexicons) -> Result<()> {
    let miss: String = lex
        .misspellings
        .iter()
        .map(|(w, m)| format!("{w}\t{}\n", m.join(",")))
        .collect();
    let glyphs: String = lex.homoglyphs.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
    let para: String = lex.paraphrases.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
    let disp: String = lex.dispensable.iter().map(|w| format!("{w}\n")).collect();
    let tpl: String = lex.templates.iter().map(|t| format!("{t}\n")).collect();
    for (name, body) in [
        (MISSPELLINGS_FILE, miss),
        (HOMOGLYPHS_FILE, glyphs),
        (PARAPHRASES_FILE, para),
        (DISPENSABLE_FILE, disp),
        (TEMPLATES_FILE, tpl),
    ] {
        write_text(&dir.join(name), &body)?;
    }
    Ok(())
}

/// Reads the lexicon files from `dir`; `year` fills `<year>` markers.
pub fn load_lexicons(dir: &Path, year: u32) -> Result<Lexicons> {
    let read = |name: &str| read_text(&dir.join(name));
    let lex = Lexicons {
        misspellings: parse_misspellings(&read(MISSPELLINGS_FILE)?)?,
        homoglyphs: parse_homoglyphs(&read(HOMOGLYPHS_FILE)?)?,
        paraphrases: parse_paraphrases(&read(PARAPHRASES_FILE)?)?,
        dispensable: lines(&read(DISPENSABLE_FILE)?)
            .map(|(_, l)| l.to_string())
            .collect::<BTreeSet<_>>(),
        templates: lines(&read(TEMPLATES_FILE)?).map(|(_, l)| l.to_string()).collect(),
        year,
    };
    lex.validate()?;
    Ok(lex)
}

// ---- settings

/// Run defaults, overridable from an INI file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub char_len: usize,
    pub word_len: usize,
    pub hot_chars: usize,
    pub min_hot_chars: usize,
    pub hot_words: usize,
    pub budget: usize,
    pub cap: usize,
    pub min_gain: f64,
    pub black_k: usize,
    pub top_n: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub lexicon_dir: Option<PathBuf>,
    pub year: u32,
    pub topic_classes: Vec<String>,
    pub sentiment_classes: Vec<String>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            char_len: 1014,
            word_len: 96,
            hot_chars: 50,
            min_hot_chars: 3,
            hot_words: 5,
            budget: 5,
            cap: 50,
            min_gain: 1e-4,
            black_k: 3,
            top_n: 10,
            epochs: 12,
            learning_rate: 0.05,
            batch_size: 16,
            seed: 7,
            lexicon_dir: None,
            year: 1996,
            topic_classes: crate::toydata::TOPIC_CLASSES.iter().map(|c| c.to_string()).collect(),
            sentiment_classes: crate::toydata::SENTIMENT_CLASSES
                .iter()
                .map(|c| c.to_string())
                .collect(),
        }
    }
}

fn get<T: std::str::FromStr>(ini: &ini::Ini, section: &str, key: &str, slot: &mut T) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = ini.section(Some(section)).and_then(|s| s.get(key)) {
        *slot = v
            .trim()
            .parse()
            .map_err(|e| Error::format("config", format!("[{section}] {key} = {v:?}: {e}")))?;
    }
    Ok(())
}

fn list(v: &str) -> Vec<String> {
    v.split(',')
        .map(|c| c.trim().to_string())
        .filter(|c| !c.is_empty())
        .collect()
}

impl Settings {
    /// Unknown keys are rejected; missing keys keep their defaults.
    pub fn from_ini(s: &str) -> Result<Self> {
        let ini = ini::Ini::load_from_str(s).map_err(|e| Error::format("config", e.to_string()))?;
        const KNOWN: &[(&str, &[&str])] = &[
            ("model", &["char_len", "word_len"]),
            (
                "saliency",
                &["hot_chars", "min_hot_chars", "hot_words", "black_k", "top_n"],
            ),
            ("attack", &["budget", "cap", "min_gain"]),
            ("train", &["epochs", "learning_rate", "batch_size", "seed"]),
            ("lexicons", &["dir", "year"]),
            ("classes", &["topic", "sentiment"]),
        ];
        for (sec, props) in ini.iter() {
            let Some(sec) = sec else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(Error::format("config", format!("key {k:?} outside a section")));
                }
                continue;
            };
            let keys = KNOWN
                .iter()
                .find(|(n, _)| *n == sec)
                .ok_or_else(|| Error::format("config", format!("unknown section [{sec}]")))?
                .1;
            if let Some((k, _)) = props.iter().find(|(k, _)| !keys.contains(k)) {
                return Err(Error::format("config", format!("unknown key {k:?} in [{sec}]")));
            }
        }
        let mut out = Self::default();
        get(&ini, "model", "char_len", &mut out.char_len)?;
        get(&ini, "model", "word_len", &mut out.word_len)?;
        get(&ini, "saliency", "hot_chars", &mut out.hot_chars)?;
        get(&ini, "saliency", "min_hot_chars", &mut out.min_hot_chars)?;
        get(&ini, "saliency", "hot_words", &mut out.hot_words)?;
        get(&ini, "saliency", "black_k", &mut out.black_k)?;
        get(&ini, "saliency", "top_n", &mut out.top_n)?;
        get(&ini, "attack", "budget", &mut out.budget)?;
        get(&ini, "attack", "cap", &mut out.cap)?;
        get(&ini, "attack", "min_gain", &mut out.min_gain)?;
        get(&ini, "train", "epochs", &mut out.epochs)?;
        get(&ini, "train", "learning_rate", &mut out.learning_rate)?;
        get(&ini, "train", "batch_size", &mut out.batch_size)?;
        get(&ini, "train", "seed", &mut out.seed)?;
        get(&ini, "lexicons", "year", &mut out.year)?;
        if let Some(sec) = ini.section(Some("lexicons")) {
            out.lexicon_dir = sec
                .get("dir")
                .map(|d| PathBuf::from(d.trim()))
                .filter(|d| !d.as_os_str().is_empty());
        }
        if let Some(sec) = ini.section(Some("classes")) {
            if let Some(v) = sec.get("topic") {
                out.topic_classes = list(v);
            }
            if let Some(v) = sec.get("sentiment") {
                out.sentiment_classes = list(v);
            }
        }
        Ok(out)
    }

    pub fn to_ini(&self) -> String {
        let mut ini = ini::Ini::new();
        ini.with_section(Some("model"))
            .set("char_len", self.char_len.to_string())
            .set("word_len", self.word_len.to_string());
        ini.with_section(Some("saliency"))
            .set("hot_chars", self.hot_chars.to_string())
            .set("min_hot_chars", self.min_hot_chars.to_string())
            .set("hot_words", self.hot_words.to_string())
            .set("black_k", self.black_k.to_string())
            .set("top_n", self.top_n.to_string());
        ini.with_section(Some("attack"))
            .set("budget", self.budget.to_string())
            .set("cap", self.cap.to_string())
            .set("min_gain", format!("{:?}", self.min_gain));
        ini.with_section(Some("train"))
            .set("epochs", self.epochs.to_string())
            .set("learning_rate", format!("{:?}", self.learning_rate))
            .set("batch_size", self.batch_size.to_string())
            .set("seed", self.seed.to_string());
        let dir = self
            .lexicon_dir
            .as_ref()
            .map(|d| d.display().to_string())
            .unwrap_or_default();
        ini.with_section(Some("lexicons"))
            .set("dir", dir)
            .set("year", self.year.to_string());
        ini.with_section(Some("classes"))
            .set("topic", self.topic_classes.join(","))
            .set("sentiment", self.sentiment_classes.join(","));
        let mut buf = Vec::new();
        ini.write_to(&mut buf).expect("write to memory");
        String::from_utf8(buf).expect("ini is utf-8")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_ini(&read_text(path)?)
    }
}
