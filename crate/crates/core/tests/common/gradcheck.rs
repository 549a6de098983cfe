//! Central finite-difference oracle for network gradients, plus a generator of
//! small random networks covering every layer kind.

use advtext_core::nn::{LayerSpec, Mode, Network, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-8;

pub struct Case {
    pub net: Network,
    pub input: Tensor,
    pub label: usize,
    /// For embedding networks: the table row used at each position (all distinct).
    pub rows: Option<Vec<usize>>,
}

fn conv(i: usize, o: usize, w: usize, s: usize) -> LayerSpec {
    LayerSpec::Conv1d {
        in_channels: i,
        out_channels: o,
        width: w,
        stride: s,
    }
}

fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// One of five architectures with random sizes and weights.
pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.gen_range(2..5);
    let (input_shape, layers, rows) = match seed % 5 {
        0 => {
            // character-model shape: conv, pool, conv, pool over time, dense stack
            let (t, c) = (rng.gen_range(14..20), rng.gen_range(3..6));
            let (h1, h2) = (rng.gen_range(2..5), rng.gen_range(2..5));
            let layers = vec![
                conv(c, h1, 3, 1),
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2 },
                conv(h1, h2, 2, 1),
                LayerSpec::Relu,
                LayerSpec::GlobalMaxPool,
                LayerSpec::Dense { inputs: h2, units: 5 },
                LayerSpec::Relu,
                LayerSpec::Dropout { p: 0.3 },
                LayerSpec::Dense {
                    inputs: 5,
                    units: classes,
                },
                LayerSpec::Softmax,
            ];
            (vec![t, c], layers, None)
        }
        1 => {
            // word-model shape: embedding, parallel banks, dropout, dense
            let (t, vocab, dim) = (rng.gen_range(6..9), 12, rng.gen_range(2..4));
            let bank = |w| vec![conv(dim, 2, w, 1), LayerSpec::Relu, LayerSpec::GlobalMaxPool];
            let layers = vec![
                LayerSpec::Embedding { vocab, dim },
                LayerSpec::Concat {
                    branches: vec![bank(2), bank(3), bank(4)],
                },
                LayerSpec::Dropout { p: 0.5 },
                LayerSpec::Dense {
                    inputs: 6,
                    units: classes,
                },
                LayerSpec::Softmax,
            ];
            let mut ids: Vec<usize> = (0..vocab).collect();
            ids.shuffle(&mut rng);
            ids.truncate(t);
            (vec![t], layers, Some(ids))
        }
        2 => {
            let (t, c) = (rng.gen_range(7..11), rng.gen_range(2..4));
            let out_t = (t - 3) / 2 + 1;
            let layers = vec![
                conv(c, 3, 3, 2),
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: out_t * 3,
                    units: classes,
                },
                LayerSpec::Softmax,
            ];
            (vec![t, c], layers, None)
        }
        3 => {
            let n = rng.gen_range(3..7);
            let layers = vec![
                LayerSpec::Dense { inputs: n, units: 6 },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    inputs: 6,
                    units: classes,
                },
                LayerSpec::Softmax,
            ];
            (vec![n], layers, None)
        }
        _ => {
            // one-hot input, as the character model sees it
            let (t, c) = (rng.gen_range(10..16), rng.gen_range(4..7));
            let layers = vec![
                conv(c, 3, 4, 1),
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 3 },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: ((t - 3) / 3) * 3,
                    units: classes,
                },
                LayerSpec::Softmax,
            ];
            (vec![t, c], layers, None)
        }
    };
    let mut net = Network::new(input_shape.clone(), layers, rng.gen()).unwrap();
    // nonzero biases so ReLU boundaries are not all at the origin
    for p in net.params_mut() {
        if p.shape().len() == 1 {
            let vals = random_values(&mut rng, p.len());
            p.data_mut().iter_mut().zip(vals).for_each(|(d, v)| *d = 0.5 * v);
        }
    }
    if seed.is_multiple_of(5) || seed % 5 == 1 {
        net.set_mode(Mode::Train);
        net.set_dropout_seed(rng.gen());
    }
    let input = match (&rows, seed % 5) {
        (Some(ids), _) => Tensor::vector(ids.iter().map(|&i| i as f64).collect()),
        (None, 4) => {
            let (t, c) = (input_shape[0], input_shape[1]);
            let mut data = vec![0.0; t * c];
            for r in 0..t {
                if rng.gen_bool(0.8) {
                    data[r * c + rng.gen_range(0..c)] = 1.0;
                }
            }
            Tensor::new(input_shape, data).unwrap()
        }
        (None, _) => {
            let n = input_shape.iter().product();
            Tensor::new(input_shape, random_values(&mut rng, n)).unwrap()
        }
    };
    let label = rng.gen_range(0..classes);
    Case {
        net,
        input,
        label,
        rows,
    }
}

#[derive(Debug, Default, Clone)]
pub struct Report {
    pub checked: usize,
    pub failures: Vec<String>,
    pub worst_rel: f64,
    pub worst_abs: f64,
}

impl Report {
    fn compare(&mut self, what: String, analytic: f64, numeric: f64) {
        self.checked += 1;
        let diff = (analytic - numeric).abs();
        self.worst_abs = self.worst_abs.max(diff);
        if diff <= ABS_FLOOR {
            return;
        }
        let rel = diff / analytic.abs().max(numeric.abs());
        self.worst_rel = self.worst_rel.max(rel);
        if rel >= REL_TOL {
            self.failures
                .push(format!("{what}: analytic {analytic:e} vs numeric {numeric:e}"));
        }
    }
}

fn central(mut f: impl FnMut(f64) -> f64) -> f64 {
    (f(STEP) - f(-STEP)) / (2.0 * STEP)
}

/// Compares every input and parameter gradient component with central differences.
pub fn check(case: &Case) -> Report {
    let Case {
        net,
        input,
        label,
        rows,
    } = case;
    let grads = net.loss_and_gradients(input, *label).unwrap();
    let mut report = Report::default();

    for (pi, (param, g)) in net.params().iter().zip(&grads.wrt_params).enumerate() {
        for j in 0..param.len() {
            let numeric = central(|h| {
                let mut probe = net.clone();
                probe.params_mut()[pi].data_mut()[j] += h;
                probe.loss(input, *label).unwrap()
            });
            report.compare(format!("param {pi}[{j}]"), g.data()[j], numeric);
        }
    }

    match rows {
        Some(ids) => {
            // distinct rows: perturbing a table row perturbs exactly one position
            let dim = grads.wrt_input.shape()[1];
            for (t, &row) in ids.iter().enumerate() {
                for d in 0..dim {
                    let numeric = central(|h| {
                        let mut probe = net.clone();
                        probe.params_mut()[0].data_mut()[row * dim + d] += h;
                        probe.loss(input, *label).unwrap()
                    });
                    report.compare(format!("input [{t},{d}]"), grads.wrt_input.data()[t * dim + d], numeric);
                }
            }
        }
        None => {
            for j in 0..input.len() {
                let numeric = central(|h| {
                    let mut x = input.clone();
                    x.data_mut()[j] += h;
                    net.loss(&x, *label).unwrap()
                });
                report.compare(format!("input [{j}]"), grads.wrt_input.data()[j], numeric);
            }
        }
    }
    report
}
