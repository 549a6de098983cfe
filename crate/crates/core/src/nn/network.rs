use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{collect_param_shapes, fans, LayerSpec};
use super::tensor::{cross_entropy, softmax, ConfVector, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

/// A feed-forward classifier ending in softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    /// Depth-first over layers, concat branches in order.
    params: Vec<Tensor>,
    mode: Mode,
    dropout_seed: u64,
}

/// Cost gradient of `-log p[label]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostGradient {
    /// Shaped like the encoded input; for networks that start with an
    /// embedding this is the gradient with respect to the embedded rows.
    pub wrt_input: Tensor,
    pub wrt_params: Vec<Tensor>,
    pub loss: f64,
}

impl Network {
    /// Builds a network with seeded uniform Glorot initialization and zero biases.
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        shape_trace(&input_shape, &layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        init_params(&layers, &mut rng, &mut params);
        Ok(Self {
            input_shape,
            layers,
            params,
            mode: Mode::Infer,
            dropout_seed: 0,
        })
    }

    /// Reassembles a network from stored parameters, checking every shape.
    pub fn from_parts(input_shape: Vec<usize>, layers: Vec<LayerSpec>, params: Vec<Tensor>) -> Result<Self> {
        shape_trace(&input_shape, &layers)?;
        let mut expected = Vec::new();
        collect_param_shapes(&layers, &mut expected);
        if expected.len() != params.len() {
            return Err(Error::CheckpointShape(format!(
                "{} parameter blocks declared by layers, {} supplied",
                expected.len(),
                params.len()
            )));
        }
        for (i, (want, got)) in expected.iter().zip(&params).enumerate() {
            if want.as_slice() != got.shape() {
                return Err(Error::CheckpointShape(format!(
                    "parameter block {i}: layers need {want:?}, got {:?}",
                    got.shape()
                )));
            }
        }
        Ok(Self {
            input_shape,
            layers,
            params,
            mode: Mode::Infer,
            dropout_seed: 0,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.params.iter().map(|p| p.shape().to_vec()).collect()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Seed for dropout masks when the network is in train mode.
    pub fn set_dropout_seed(&mut self, seed: u64) {
        self.dropout_seed = seed;
    }

    pub fn num_classes(&self) -> usize {
        // validated at construction: the stack ends in softmax over [K]
        *shape_trace(&self.input_shape, &self.layers)
            .expect("validated")
            .last()
            .and_then(|s| s.first())
            .expect("non-empty")
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::Shape {
                layer: "0".into(),
                kind: self.layers[0].name(),
                detail: format!("expects input {:?}, got {:?}", self.input_shape, input.shape()),
            });
        }
        if let LayerSpec::Embedding { vocab, .. } = self.layers[0] {
            if let Some(bad) = input
                .data()
                .iter()
                .find(|&&v| v < 0.0 || v.fract() != 0.0 || v as usize >= vocab)
            {
                return Err(Error::Shape {
                    layer: "0".into(),
                    kind: "embedding",
                    detail: format!("index {bad} is not a row of a {vocab}-row table"),
                });
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<ConfVector> {
        self.forward_with_seed(input, self.dropout_seed)
    }

    /// Same as [`Network::forward`] without copying the input.
    pub fn forward_owned(&self, input: Tensor) -> Result<ConfVector> {
        self.check_input(&input)?;
        let logits = self.logits(input, self.dropout_seed, None);
        Ok(ConfVector::new(softmax(logits.data())))
    }

    pub(crate) fn forward_with_seed(&self, input: &Tensor, seed: u64) -> Result<ConfVector> {
        self.check_input(input)?;
        let logits = self.logits(input.clone(), seed, None);
        Ok(ConfVector::new(softmax(logits.data())))
    }

    /// `-log forward(input)[label]`, computed from logits.
    pub fn loss(&self, input: &Tensor, label: usize) -> Result<f64> {
        self.check_input(input)?;
        let classes = self.num_classes();
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let logits = self.logits(input.clone(), self.dropout_seed, None);
        Ok(cross_entropy(logits.data(), label))
    }

    pub fn loss_and_gradients(&self, input: &Tensor, label: usize) -> Result<CostGradient> {
        let (loss, wrt_input, wrt_params) = self.gradients(input, label, self.dropout_seed, true, true)?;
        Ok(CostGradient {
            wrt_input: wrt_input.expect("requested"),
            wrt_params: wrt_params.expect("requested"),
            loss,
        })
    }

    /// Loss and input gradient only; parameter gradients are skipped.
    pub fn input_gradient(&self, input: &Tensor, label: usize) -> Result<(f64, Tensor)> {
        let (loss, wrt_input, _) = self.gradients(input, label, self.dropout_seed, true, false)?;
        Ok((loss, wrt_input.expect("requested")))
    }

    pub(crate) fn gradients(
        &self,
        input: &Tensor,
        label: usize,
        seed: u64,
        want_input: bool,
        want_params: bool,
    ) -> Result<(f64, Option<Tensor>, Option<Vec<Tensor>>)> {
        self.check_input(input)?;
        let classes = self.num_classes();
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let logits = self.logits(input.clone(), seed, Some(&mut caches));
        let loss = cross_entropy(logits.data(), label);
        let mut grad = softmax(logits.data());
        grad[label] -= 1.0;

        let mut param_grads = if want_params {
            Some(self.params.iter().map(|p| Tensor::zeros(p.shape())).collect::<Vec<_>>())
        } else {
            None
        };
        let body = &self.layers[..self.layers.len() - 1];
        let mut bw = Backward {
            params: &self.params,
            grads: param_grads.as_mut(),
            input_grad: None,
        };
        let g = bw.run(body, caches, Tensor::vector(grad), want_input);
        let wrt_input = if want_input {
            Some(bw.input_grad.take().or(g).expect("input gradient"))
        } else {
            None
        };
        Ok((loss, wrt_input, param_grads))
    }

    /// Pre-softmax scores for a validated input.
    fn logits(&self, input: Tensor, seed: u64, caches: Option<&mut Vec<Cache>>) -> Tensor {
        let body = &self.layers[..self.layers.len() - 1];
        let mut fw = Forward {
            params: &self.params,
            cursor: 0,
            train: self.mode == Mode::Train,
            seed,
            dropouts: 0,
        };
        fw.run(body, input, caches)
    }
}

/// Shape after each layer, failing with the trace so far.
pub(crate) fn shape_trace(input: &[usize], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    let mut trace = vec![input.to_vec()];
    let render = |trace: &[Vec<usize>]| {
        trace
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if i == 0 {
                    format!("  input {s:?}")
                } else {
                    format!("  {i}: {} -> {s:?}", layers[i - 1].name())
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    if layers.is_empty() {
        return Err(Error::Architecture {
            detail: "no layers".into(),
            trace: render(&trace),
        });
    }
    if input.is_empty() || input.contains(&0) {
        return Err(Error::Architecture {
            detail: format!("input shape {input:?} must have positive extents"),
            trace: render(&trace),
        });
    }
    for (i, layer) in layers.iter().enumerate() {
        let is_last = i + 1 == layers.len();
        if matches!(layer, LayerSpec::Softmax) != is_last {
            return Err(Error::Architecture {
                detail: if is_last {
                    "the stack must end with softmax".into()
                } else {
                    format!("softmax at layer {i} is only allowed last")
                },
                trace: render(&trace),
            });
        }
        if matches!(layer, LayerSpec::Embedding { .. }) && i != 0 {
            return Err(Error::Architecture {
                detail: format!("embedding at layer {i} is only allowed first"),
                trace: render(&trace),
            });
        }
        let next = layer
            .output_shape(trace.last().expect("non-empty"))
            .map_err(|detail| Error::Architecture {
                detail: format!("layer {i} ({}): {detail}", layer.name()),
                trace: render(&trace),
            })?;
        trace.push(next);
    }
    Ok(trace)
}

fn init_params(layers: &[LayerSpec], rng: &mut ChaCha8Rng, out: &mut Vec<Tensor>) {
    for layer in layers {
        let shapes = layer.own_param_shapes();
        if !shapes.is_empty() {
            let (fan_in, fan_out) = fans(layer);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            for (i, shape) in shapes.iter().enumerate() {
                let mut t = Tensor::zeros(shape);
                // index 0 is the weight block; trailing blocks are biases
                if i == 0 {
                    for v in t.data_mut() {
                        *v = dist.sample(rng);
                    }
                }
                out.push(t);
            }
        }
        if let LayerSpec::Concat { branches } = layer {
            for branch in branches {
                init_params(branch, rng, out);
            }
        }
    }
}

enum Cache {
    Embedding {
        param: usize,
        indices: Vec<usize>,
    },
    Conv {
        param: usize,
        input: Tensor,
    },
    Relu {
        mask: Vec<bool>,
    },
    MaxPool {
        argmax: Vec<usize>,
        in_shape: Vec<usize>,
    },
    GlobalMax {
        argmax: Vec<usize>,
        in_shape: Vec<usize>,
    },
    Flatten {
        in_shape: Vec<usize>,
    },
    Dense {
        param: usize,
        input: Tensor,
    },
    Dropout {
        mask: Option<Vec<f64>>,
    },
    Concat {
        branches: Vec<Vec<Cache>>,
        widths: Vec<usize>,
    },
}

struct Forward<'a> {
    params: &'a [Tensor],
    cursor: usize,
    train: bool,
    seed: u64,
    dropouts: u64,
}

impl Forward<'_> {
    fn run(&mut self, layers: &[LayerSpec], mut x: Tensor, mut caches: Option<&mut Vec<Cache>>) -> Tensor {
        for layer in layers {
            let record = caches.is_some();
            let (y, cache) = self.layer(layer, x, record);
            if let Some(c) = caches.as_deref_mut() {
                c.push(cache.expect("recorded"));
            }
            x = y;
        }
        x
    }

    fn layer(&mut self, layer: &LayerSpec, x: Tensor, record: bool) -> (Tensor, Option<Cache>) {
        match *layer {
            LayerSpec::Embedding { dim, .. } => {
                let param = self.cursor;
                self.cursor += 1;
                let table = self.params[param].data();
                let indices: Vec<usize> = x.data().iter().map(|&v| v as usize).collect();
                let mut out = Vec::with_capacity(indices.len() * dim);
                for &ix in &indices {
                    out.extend_from_slice(&table[ix * dim..(ix + 1) * dim]);
                }
                let y = Tensor::new(vec![indices.len(), dim], out).expect("shape");
                (y, record.then_some(Cache::Embedding { param, indices }))
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                width,
                stride,
            } => {
                let param = self.cursor;
                self.cursor += 2;
                let y = conv_forward(
                    &x,
                    &self.params[param],
                    &self.params[param + 1],
                    in_channels,
                    out_channels,
                    width,
                    stride,
                );
                (y, record.then_some(Cache::Conv { param, input: x }))
            }
            LayerSpec::Relu => {
                let mut y = x;
                let mut mask = if record {
                    Vec::with_capacity(y.len())
                } else {
                    Vec::new()
                };
                for v in y.data_mut() {
                    let keep = *v > 0.0;
                    if !keep {
                        *v = 0.0;
                    }
                    if record {
                        mask.push(keep);
                    }
                }
                (y, record.then_some(Cache::Relu { mask }))
            }
            LayerSpec::MaxPool { size } => {
                let (t, c) = (x.shape()[0], x.shape()[1]);
                let t_out = t / size;
                let mut out = vec![0.0; t_out * c];
                let mut argmax = vec![0; t_out * c];
                let xd = x.data();
                for to in 0..t_out {
                    for ch in 0..c {
                        let mut best = to * size;
                        for ti in to * size + 1..(to + 1) * size {
                            if xd[ti * c + ch] > xd[best * c + ch] {
                                best = ti;
                            }
                        }
                        out[to * c + ch] = xd[best * c + ch];
                        argmax[to * c + ch] = best;
                    }
                }
                let y = Tensor::new(vec![t_out, c], out).expect("shape");
                let in_shape = x.shape().to_vec();
                (y, record.then_some(Cache::MaxPool { argmax, in_shape }))
            }
            LayerSpec::GlobalMaxPool => {
                let (t, c) = (x.shape()[0], x.shape()[1]);
                let xd = x.data();
                let mut argmax = vec![0usize; c];
                for ti in 1..t {
                    let row = &xd[ti * c..(ti + 1) * c];
                    for ch in 0..c {
                        if row[ch] > xd[argmax[ch] * c + ch] {
                            argmax[ch] = ti;
                        }
                    }
                }
                let out: Vec<f64> = (0..c).map(|ch| xd[argmax[ch] * c + ch]).collect();
                let in_shape = x.shape().to_vec();
                (
                    Tensor::vector(out),
                    record.then_some(Cache::GlobalMax { argmax, in_shape }),
                )
            }
            LayerSpec::Flatten => {
                let in_shape = x.shape().to_vec();
                let n = x.len();
                (x.reshaped(vec![n]), record.then_some(Cache::Flatten { in_shape }))
            }
            LayerSpec::Dense { inputs, units } => {
                let param = self.cursor;
                self.cursor += 2;
                let w = self.params[param].data();
                let b = self.params[param + 1].data();
                let xd = x.data();
                let out: Vec<f64> = (0..units)
                    .map(|u| {
                        let row = &w[u * inputs..(u + 1) * inputs];
                        b[u] + row.iter().zip(xd).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect();
                (Tensor::vector(out), record.then_some(Cache::Dense { param, input: x }))
            }
            LayerSpec::Dropout { p } => {
                let index = self.dropouts;
                self.dropouts += 1;
                if !self.train || p == 0.0 {
                    return (x, record.then_some(Cache::Dropout { mask: None }));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, index));
                let scale = 1.0 / (1.0 - p);
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
                    .collect();
                let mut y = x;
                for (v, m) in y.data_mut().iter_mut().zip(&mask) {
                    *v *= m;
                }
                (y, record.then_some(Cache::Dropout { mask: Some(mask) }))
            }
            LayerSpec::Concat { ref branches } => {
                let mut out = Vec::new();
                let mut widths = Vec::with_capacity(branches.len());
                let mut branch_caches = Vec::with_capacity(branches.len());
                for branch in branches {
                    let mut bc = Vec::new();
                    let y = self.run(branch, x.clone(), record.then_some(&mut bc));
                    widths.push(y.len());
                    out.extend_from_slice(y.data());
                    branch_caches.push(bc);
                }
                (
                    Tensor::vector(out),
                    record.then_some(Cache::Concat {
                        branches: branch_caches,
                        widths,
                    }),
                )
            }
            LayerSpec::Softmax => unreachable!("softmax is applied by the network"),
        }
    }
}

struct Backward<'a> {
    params: &'a [Tensor],
    grads: Option<&'a mut Vec<Tensor>>,
    /// Gradient with respect to embedded rows, when the stack starts with an embedding.
    input_grad: Option<Tensor>,
}

impl Backward<'_> {
    /// Propagates `grad` back through `layers`; returns the gradient at the
    /// stack input when `need_input` is set.
    fn run(&mut self, layers: &[LayerSpec], caches: Vec<Cache>, mut grad: Tensor, need_input: bool) -> Option<Tensor> {
        debug_assert_eq!(layers.len(), caches.len());
        for (i, (layer, cache)) in layers.iter().zip(caches).enumerate().rev() {
            let need = need_input || i > 0;
            {
                let g = self.layer(layer, cache, grad, need)?;
                grad = g
            }
        }
        Some(grad)
    }

    fn layer(&mut self, layer: &LayerSpec, cache: Cache, g: Tensor, need_input: bool) -> Option<Tensor> {
        match (layer, cache) {
            (LayerSpec::Embedding { dim, .. }, Cache::Embedding { param, indices }) => {
                if let Some(grads) = self.grads.as_deref_mut() {
                    let table = grads[param].data_mut();
                    for (row, &ix) in indices.iter().enumerate() {
                        for d in 0..*dim {
                            table[ix * dim + d] += g.data()[row * dim + d];
                        }
                    }
                }
                self.input_grad = Some(g);
                None
            }
            (
                &LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    width,
                    stride,
                },
                Cache::Conv { param, input },
            ) => {
                let w = self.params[param].data();
                let (t_in, t_out) = (input.shape()[0], g.shape()[0]);
                let xd = input.data();
                let gd = g.data();
                if let Some(grads) = self.grads.as_deref_mut() {
                    {
                        let gw = grads[param].data_mut();
                        for ti in 0..t_in {
                            for ci in 0..in_channels {
                                let v = xd[ti * in_channels + ci];
                                if v == 0.0 {
                                    continue;
                                }
                                for k in 0..width.min(ti + 1) {
                                    let d = ti - k;
                                    if d % stride != 0 || d / stride >= t_out {
                                        continue;
                                    }
                                    let to = d / stride;
                                    let grow = &gd[to * out_channels..(to + 1) * out_channels];
                                    let wrow = &mut gw[(k * in_channels + ci) * out_channels..][..out_channels];
                                    for (a, b) in wrow.iter_mut().zip(grow) {
                                        *a += v * b;
                                    }
                                }
                            }
                        }
                    }
                    let gb = grads[param + 1].data_mut();
                    for to in 0..t_out {
                        for (a, b) in gb.iter_mut().zip(&gd[to * out_channels..(to + 1) * out_channels]) {
                            *a += b;
                        }
                    }
                }
                if !need_input {
                    return None;
                }
                let mut gx = vec![0.0; t_in * in_channels];
                for to in 0..t_out {
                    let grow = &gd[to * out_channels..(to + 1) * out_channels];
                    for k in 0..width {
                        let ti = to * stride + k;
                        for ci in 0..in_channels {
                            let wrow = &w[(k * in_channels + ci) * out_channels..][..out_channels];
                            gx[ti * in_channels + ci] += wrow.iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
                Some(Tensor::new(vec![t_in, in_channels], gx).expect("shape"))
            }
            (LayerSpec::Relu, Cache::Relu { mask }) => {
                let mut g = g;
                for (v, keep) in g.data_mut().iter_mut().zip(mask) {
                    if !keep {
                        *v = 0.0;
                    }
                }
                Some(g)
            }
            (LayerSpec::MaxPool { .. }, Cache::MaxPool { argmax, in_shape }) => {
                let c = in_shape[1];
                let mut gx = Tensor::zeros(&in_shape);
                let gxd = gx.data_mut();
                for (j, &src) in argmax.iter().enumerate() {
                    gxd[src * c + j % c] += g.data()[j];
                }
                Some(gx)
            }
            (LayerSpec::GlobalMaxPool, Cache::GlobalMax { argmax, in_shape }) => {
                let c = in_shape[1];
                let mut gx = Tensor::zeros(&in_shape);
                let gxd = gx.data_mut();
                for (ch, &src) in argmax.iter().enumerate() {
                    gxd[src * c + ch] += g.data()[ch];
                }
                Some(gx)
            }
            (LayerSpec::Flatten, Cache::Flatten { in_shape }) => Some(g.reshaped(in_shape)),
            (&LayerSpec::Dense { inputs, units }, Cache::Dense { param, input }) => {
                let gd = g.data();
                if let Some(grads) = self.grads.as_deref_mut() {
                    {
                        let gw = grads[param].data_mut();
                        for u in 0..units {
                            let gu = gd[u];
                            if gu == 0.0 {
                                continue;
                            }
                            for (a, x) in gw[u * inputs..(u + 1) * inputs].iter_mut().zip(input.data()) {
                                *a += gu * x;
                            }
                        }
                    }
                    for (a, b) in grads[param + 1].data_mut().iter_mut().zip(gd) {
                        *a += b;
                    }
                }
                if !need_input {
                    return None;
                }
                let w = self.params[param].data();
                let mut gx = vec![0.0; inputs];
                for u in 0..units {
                    let gu = gd[u];
                    if gu == 0.0 {
                        continue;
                    }
                    for (a, wv) in gx.iter_mut().zip(&w[u * inputs..(u + 1) * inputs]) {
                        *a += gu * wv;
                    }
                }
                Some(Tensor::vector(gx))
            }
            (LayerSpec::Dropout { .. }, Cache::Dropout { mask }) => {
                let mut g = g;
                if let Some(mask) = mask {
                    for (v, m) in g.data_mut().iter_mut().zip(mask) {
                        *v *= m;
                    }
                }
                Some(g)
            }
            (
                LayerSpec::Concat { branches },
                Cache::Concat {
                    branches: caches,
                    widths,
                },
            ) => {
                let mut total: Option<Tensor> = None;
                let mut offset = 0;
                for ((branch, bc), width) in branches.iter().zip(caches).zip(widths) {
                    let part = Tensor::vector(g.data()[offset..offset + width].to_vec());
                    offset += width;
                    let gi = self.run(branch, bc, part, true).expect("branch input gradient");
                    match total.as_mut() {
                        Some(t) => t.add_assign(&gi),
                        None => total = Some(gi),
                    }
                }
                total
            }
            _ => unreachable!("cache does not match layer"),
        }
    }
}

fn conv_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    in_channels: usize,
    out_channels: usize,
    width: usize,
    stride: usize,
) -> Tensor {
    let t_in = x.shape()[0];
    let t_out = (t_in - width) / stride + 1;
    let mut out = Vec::with_capacity(t_out * out_channels);
    for _ in 0..t_out {
        out.extend_from_slice(b.data());
    }
    let xd = x.data();
    let wd = w.data();
    // scatter each nonzero input entry; one-hot and ReLU inputs are mostly zero
    for ti in 0..t_in {
        for ci in 0..in_channels {
            let v = xd[ti * in_channels + ci];
            if v == 0.0 {
                continue;
            }
            for k in 0..width.min(ti + 1) {
                let d = ti - k;
                if d % stride != 0 || d / stride >= t_out {
                    continue;
                }
                let to = d / stride;
                let wrow = &wd[(k * in_channels + ci) * out_channels..][..out_channels];
                let orow = &mut out[to * out_channels..(to + 1) * out_channels];
                for (o, wv) in orow.iter_mut().zip(wrow) {
                    *o += v * wv;
                }
            }
        }
    }
    Tensor::new(vec![t_out, out_channels], out).expect("shape")
}

/// SplitMix64-style combination of a seed with a stream index.
pub(crate) fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_net(logit_bias: Vec<f64>) -> Network {
        let k = logit_bias.len();
        let layers = vec![LayerSpec::Dense { inputs: 3, units: k }, LayerSpec::Softmax];
        let mut net = Network::new(vec![3], layers, 1).unwrap();
        net.params_mut()[0].data_mut().iter_mut().for_each(|v| *v = 0.0);
        net.params_mut()[1].data_mut().copy_from_slice(&logit_bias);
        net
    }

    #[test]
    fn zero_logits_are_uniform() {
        let x = Tensor::vector(vec![0.3, -0.2, 1.0]);
        assert_eq!(dense_net(vec![0.0; 2]).forward(&x).unwrap().probs(), &[0.5, 0.5]);
        assert_eq!(dense_net(vec![0.0; 4]).forward(&x).unwrap().probs(), &[0.25; 4]);
    }

    #[test]
    fn certain_prediction_has_zero_loss_and_gradient() {
        let net = dense_net(vec![1000.0, 0.0]);
        let x = Tensor::vector(vec![0.3, -0.2, 1.0]);
        let g = net.loss_and_gradients(&x, 0).unwrap();
        assert_eq!(g.loss, 0.0);
        assert!(g.wrt_input.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn label_out_of_range() {
        let net = dense_net(vec![0.0; 2]);
        let x = Tensor::vector(vec![0.0; 3]);
        assert!(matches!(
            net.loss_and_gradients(&x, 2),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn input_shape_mismatch_names_layer() {
        let net = dense_net(vec![0.0; 2]);
        let err = net.forward(&Tensor::vector(vec![0.0; 4])).unwrap_err();
        assert!(err.to_string().contains("dense"), "{err}");
    }

    #[test]
    fn architecture_errors_carry_trace() {
        let layers = vec![
            LayerSpec::Conv1d {
                in_channels: 4,
                out_channels: 2,
                width: 3,
                stride: 1,
            },
            LayerSpec::Dense { inputs: 5, units: 2 },
            LayerSpec::Softmax,
        ];
        let err = Network::new(vec![10, 4], layers, 0).unwrap_err().to_string();
        assert!(err.contains("conv1d -> [8, 2]"), "{err}");
        let no_softmax = vec![LayerSpec::Dense { inputs: 3, units: 2 }];
        assert!(Network::new(vec![3], no_softmax, 0).is_err());
    }

    #[test]
    fn dropout_is_identity_in_infer_mode() {
        let layers = vec![
            LayerSpec::Dropout { p: 0.5 },
            LayerSpec::Dense { inputs: 4, units: 3 },
            LayerSpec::Softmax,
        ];
        let with = Network::new(vec![4], layers, 9).unwrap();
        let without = Network::from_parts(
            vec![4],
            vec![LayerSpec::Dense { inputs: 4, units: 3 }, LayerSpec::Softmax],
            with.params().to_vec(),
        )
        .unwrap();
        let x = Tensor::vector(vec![0.5, -1.0, 2.0, 0.25]);
        assert_eq!(with.forward(&x).unwrap(), without.forward(&x).unwrap());
        let mut train = with.clone();
        train.set_mode(Mode::Train);
        train.set_dropout_seed(3);
        assert_eq!(train.forward(&x).unwrap(), train.forward(&x).unwrap());
    }

    #[test]
    fn embedding_rejects_bad_indices() {
        let layers = vec![
            LayerSpec::Embedding { vocab: 5, dim: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 6, units: 2 },
            LayerSpec::Softmax,
        ];
        let net = Network::new(vec![3], layers, 0).unwrap();
        assert!(net.forward(&Tensor::vector(vec![0.0, 4.0, 1.0])).is_ok());
        assert!(net.forward(&Tensor::vector(vec![0.0, 5.0, 1.0])).is_err());
        assert!(net.forward(&Tensor::vector(vec![0.5, 1.0, 1.0])).is_err());
    }
}
