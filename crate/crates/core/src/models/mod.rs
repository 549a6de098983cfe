//! Concrete classifiers over the engine and the uniform text-in,
//! confidences-out interface every attack pipeline talks to.

mod external;

use serde::{Deserialize, Serialize};

pub use external::{parse_reply, ExternalOracle, OracleLimits, Transport};

use crate::codec::{encode_chars, encode_words, Alphabet, Doc, EncodedInput, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::{self, ConfVector, LayerSpec, Mode, Network, Tensor, TrainConfig};

/// Anything that maps text to a probability vector over named classes.
pub trait Classifier: Send + Sync {
    fn class_names(&self) -> &[String];

    fn classify(&self, text: &str) -> Result<ConfVector>;

    fn class_index(&self, name: &str) -> Result<usize> {
        self.class_names()
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Char,
    Word,
    External,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Char => "char",
            ModelKind::Word => "word",
            ModelKind::External => "external",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pool {
    None,
    Size(usize),
    OverTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub width: usize,
    pub filters: usize,
    pub pool: Pool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharArch {
    pub convs: Vec<ConvStage>,
    /// Hidden dense widths before the output layer.
    pub dense: Vec<usize>,
    pub dropout: f64,
}

impl CharArch {
    /// Two convolution stages and one hidden dense layer.
    pub fn desk() -> Self {
        Self {
            convs: vec![
                ConvStage {
                    width: 7,
                    filters: 32,
                    pool: Pool::Size(3),
                },
                ConvStage {
                    width: 3,
                    filters: 32,
                    pool: Pool::OverTime,
                },
            ],
            dense: vec![64],
            dropout: 0.0,
        }
    }

    /// Six convolutions and three dense layers at the original widths.
    pub fn full_scale() -> Self {
        let stage = |width, pool| ConvStage {
            width,
            filters: 256,
            pool,
        };
        Self {
            convs: vec![
                stage(7, Pool::Size(3)),
                stage(7, Pool::Size(3)),
                stage(3, Pool::None),
                stage(3, Pool::None),
                stage(3, Pool::None),
                stage(3, Pool::Size(3)),
            ],
            dense: vec![1024, 1024],
            dropout: 0.5,
        }
    }
}

impl Default for CharArch {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordArch {
    pub embed_dim: usize,
    pub widths: Vec<usize>,
    pub maps: usize,
    pub dropout: f64,
}

impl Default for WordArch {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            widths: vec![3, 4, 5],
            maps: 100,
            dropout: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Backend {
    Char {
        alphabet: Alphabet,
        len: usize,
        net: Network,
    },
    Word {
        vocab: Vocabulary,
        len: usize,
        net: Network,
    },
    External(ExternalOracle),
}

/// A named classifier with ordered class names.
#[derive(Debug, Clone)]
pub struct ClassifierHandle {
    pub id: String,
    classes: Vec<String>,
    backend: Backend,
}

fn check_classes(classes: &[String]) -> Result<()> {
    if classes.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two classes, got {}",
            classes.len()
        )));
    }
    for (i, c) in classes.iter().enumerate() {
        if classes[..i].contains(c) {
            return Err(Error::InvalidArgument(format!("duplicate class name `{c}`")));
        }
    }
    Ok(())
}

fn conv_stack(alphabet_len: usize, arch: &CharArch) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut channels = alphabet_len;
    let mut flat = false;
    for stage in &arch.convs {
        layers.push(LayerSpec::Conv1d {
            in_channels: channels,
            out_channels: stage.filters,
            width: stage.width,
            stride: 1,
        });
        layers.push(LayerSpec::Relu);
        match stage.pool {
            Pool::None => {}
            Pool::Size(size) => layers.push(LayerSpec::MaxPool { size }),
            Pool::OverTime => {
                layers.push(LayerSpec::GlobalMaxPool);
                flat = true;
            }
        }
        channels = stage.filters;
    }
    if !flat {
        layers.push(LayerSpec::Flatten);
    }
    layers
}

fn dense_head(layers: &mut Vec<LayerSpec>, mut width: usize, hidden: &[usize], dropout: f64, classes: usize) {
    for &units in hidden {
        layers.push(LayerSpec::Dense { inputs: width, units });
        layers.push(LayerSpec::Relu);
        if dropout > 0.0 {
            layers.push(LayerSpec::Dropout { p: dropout });
        }
        width = units;
    }
    layers.push(LayerSpec::Dense {
        inputs: width,
        units: classes,
    });
    layers.push(LayerSpec::Softmax);
}

/// Output width of a layer prefix, reported as an architecture error on conflict.
fn prefix_width(input: &[usize], layers: &[LayerSpec]) -> Result<usize> {
    let mut shape = input.to_vec();
    let mut trace = vec![format!("  input {shape:?}")];
    for (i, layer) in layers.iter().enumerate() {
        shape = layer.output_shape(&shape).map_err(|detail| Error::Architecture {
            detail: format!("layer {i} ({}): {detail}", layer.name()),
            trace: trace.join("\n"),
        })?;
        trace.push(format!("  {}: {} -> {shape:?}", i + 1, layer.name()));
    }
    Ok(shape.iter().product())
}

impl ClassifierHandle {
    pub fn build_char_cnn(
        id: impl Into<String>,
        classes: Vec<String>,
        alphabet: Alphabet,
        len: usize,
        arch: &CharArch,
        seed: u64,
    ) -> Result<Self> {
        check_classes(&classes)?;
        let input = vec![len, alphabet.len()];
        let mut layers = conv_stack(alphabet.len(), arch);
        let width = prefix_width(&input, &layers)?;
        dense_head(&mut layers, width, &arch.dense, arch.dropout, classes.len());
        let net = Network::new(input, layers, seed)?;
        Ok(Self {
            id: id.into(),
            classes,
            backend: Backend::Char { alphabet, len, net },
        })
    }

    pub fn build_word_cnn(
        id: impl Into<String>,
        classes: Vec<String>,
        vocab: Vocabulary,
        len: usize,
        arch: &WordArch,
        seed: u64,
    ) -> Result<Self> {
        check_classes(&classes)?;
        let dim = match vocab.embeddings() {
            Some(table) => table.shape()[1],
            None => arch.embed_dim,
        };
        let branches = arch
            .widths
            .iter()
            .map(|&width| {
                vec![
                    LayerSpec::Conv1d {
                        in_channels: dim,
                        out_channels: arch.maps,
                        width,
                        stride: 1,
                    },
                    LayerSpec::Relu,
                    LayerSpec::GlobalMaxPool,
                ]
            })
            .collect();
        let mut layers = vec![
            LayerSpec::Embedding {
                vocab: vocab.len(),
                dim,
            },
            LayerSpec::Concat { branches },
        ];
        if arch.dropout > 0.0 {
            layers.push(LayerSpec::Dropout { p: arch.dropout });
        }
        let width = prefix_width(&[len], &layers)?;
        dense_head(&mut layers, width, &[], 0.0, classes.len());
        let mut net = Network::new(vec![len], layers, seed)?;
        if let Some(table) = vocab.embeddings() {
            net.params_mut()[0] = table.clone();
        }
        Ok(Self {
            id: id.into(),
            classes,
            backend: Backend::Word { vocab, len, net },
        })
    }

    pub fn external(id: impl Into<String>, classes: Vec<String>, oracle: ExternalOracle) -> Result<Self> {
        check_classes(&classes)?;
        Ok(Self {
            id: id.into(),
            classes,
            backend: Backend::External(oracle),
        })
    }

    /// Reassembles a handle from stored parts; used by checkpoint loading.
    pub fn from_backend(id: impl Into<String>, classes: Vec<String>, backend: Backend) -> Result<Self> {
        check_classes(&classes)?;
        if let Backend::Char { net, .. } | Backend::Word { net, .. } = &backend {
            if net.num_classes() != classes.len() {
                return Err(Error::CheckpointShape(format!(
                    "network has {} outputs for {} class names",
                    net.num_classes(),
                    classes.len()
                )));
            }
        }
        Ok(Self {
            id: id.into(),
            classes,
            backend,
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self.backend {
            Backend::Char { .. } => ModelKind::Char,
            Backend::Word { .. } => ModelKind::Word,
            Backend::External(_) => ModelKind::External,
        }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn network(&self) -> Option<&Network> {
        match &self.backend {
            Backend::Char { net, .. } | Backend::Word { net, .. } => Some(net),
            Backend::External(_) => None,
        }
    }

    pub fn network_mut(&mut self) -> Option<&mut Network> {
        match &mut self.backend {
            Backend::Char { net, .. } | Backend::Word { net, .. } => Some(net),
            Backend::External(_) => None,
        }
    }

    /// Model input for `text`; fails for external models.
    pub fn encode(&self, text: &str) -> Result<EncodedInput> {
        match &self.backend {
            Backend::Char { alphabet, len, .. } => encode_chars(text, alphabet, *len),
            Backend::Word { vocab, len, .. } => encode_words(text, vocab, *len),
            Backend::External(_) => Err(no_gradients()),
        }
    }

    /// Encoded input and the cost gradient of `class` with respect to it
    /// (embedded rows for word models).
    pub fn input_gradient(&self, text: &str, class: usize) -> Result<(EncodedInput, Tensor)> {
        let net = self.network().ok_or_else(no_gradients)?;
        let enc = self.encode(text)?;
        let (_, grad) = net.input_gradient(enc.tensor(), class)?;
        Ok((enc, grad))
    }
}

pub(crate) fn no_gradients() -> Error {
    Error::Unsupported("no gradients available: model is an external oracle".into())
}

impl Classifier for ClassifierHandle {
    fn class_names(&self) -> &[String] {
        &self.classes
    }

    fn classify(&self, text: &str) -> Result<ConfVector> {
        match &self.backend {
            Backend::Char { net, .. } | Backend::Word { net, .. } => {
                net.forward_owned(self.encode(text)?.into_tensor())
            }
            Backend::External(oracle) => oracle.classify(text, self.classes.len()),
        }
    }
}

/// Trains a char or word handle on labeled docs; returns the per-epoch loss.
pub fn train_classifier(handle: &mut ClassifierHandle, docs: &[Doc], cfg: &TrainConfig) -> Result<Vec<f64>> {
    if handle.kind() == ModelKind::External {
        return Err(Error::Unsupported("external models cannot be trained".into()));
    }
    if docs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let data = docs
        .iter()
        .map(|d| {
            let label = label_index(handle, d)?;
            Ok((handle.encode(d.text())?.into_tensor(), label))
        })
        .collect::<Result<Vec<_>>>()?;
    let net = handle.network_mut().expect("checked kind");
    let trained = nn::train(std::mem::replace(net, placeholder()), &data, cfg)?;
    *net = trained.network;
    net.set_mode(Mode::Infer);
    Ok(trained.loss_curve)
}

fn placeholder() -> Network {
    Network::new(
        vec![1],
        vec![LayerSpec::Dense { inputs: 1, units: 2 }, LayerSpec::Softmax],
        0,
    )
    .expect("valid")
}

fn label_index(h: &dyn Classifier, doc: &Doc) -> Result<usize> {
    let label = doc
        .label
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("doc `{}` has no label", doc.id)))?;
    h.class_index(label)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn render(&self) -> String {
        let mut out = format!("accuracy {:.4} over {} docs\n", self.accuracy, self.total());
        let w = self.classes.iter().map(|c| c.len()).max().unwrap_or(4).max(6);
        out.push_str(&format!("{:w$}", "true\\pred"));
        for c in &self.classes {
            out.push_str(&format!(" {c:>w$}"));
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            out.push_str(&format!("{c:w$}"));
            for n in row {
                out.push_str(&format!(" {n:>w$}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn evaluate(h: &dyn Classifier, docs: &[Doc]) -> Result<EvalReport> {
    if docs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let labels = docs.iter().map(|d| label_index(h, d)).collect::<Result<Vec<_>>>()?;
    let preds = crate::par::map(docs, |d| h.classify(d.text()).map(|c| c.argmax()));
    let k = h.class_names().len();
    let mut confusion = vec![vec![0; k]; k];
    let mut correct = 0;
    for (label, pred) in labels.into_iter().zip(preds) {
        let pred = pred?;
        confusion[label][pred] += 1;
        correct += usize::from(label == pred);
    }
    Ok(EvalReport {
        classes: h.class_names().to_vec(),
        accuracy: correct as f64 / docs.len() as f64,
        confusion,
    })
}
