use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{mix, Mode, Network};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.05,
            batch_size: 16,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub network: Network,
    /// Mean training loss of each epoch.
    pub loss_curve: Vec<f64>,
}

/// Plain mini-batch SGD on mean cross-entropy.
///
/// Per-sample gradients may be computed in parallel but are summed in batch
/// order, so the result is bit-identical for a given seed either way.
pub fn train(mut net: Network, data: &[(Tensor, usize)], cfg: &TrainConfig) -> Result<Trained> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {}",
            cfg.learning_rate
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let restore = net.mode();
    net.set_mode(Mode::Train);
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let base = (epoch * data.len() + b * cfg.batch_size) as u64;
            let net_ref = &net;
            let results = par::map_range(batch.len(), |j| {
                let (x, y) = &data[batch[j]];
                let seed = mix(cfg.seed ^ 0xD1B5_4A32_D192_ED03, base + j as u64);
                net_ref.gradients(x, *y, seed, false, true)
            });
            let mut sum: Option<Vec<Tensor>> = None;
            for r in results {
                let (loss, _, grads) = r?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch });
                }
                epoch_loss += loss;
                let grads = grads.expect("requested");
                match sum.as_mut() {
                    None => sum = Some(grads),
                    Some(acc) => acc.iter_mut().zip(&grads).for_each(|(a, g)| a.add_assign(g)),
                }
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (p, g) in net.params_mut().iter_mut().zip(sum.expect("non-empty batch")) {
                for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                    *pv -= step * gv;
                }
            }
            if net.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
        }
        loss_curve.push(epoch_loss / data.len() as f64);
    }
    net.set_mode(restore);
    Ok(Trained {
        network: net,
        loss_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    fn toy() -> Vec<(Tensor, usize)> {
        // two clusters split by the sign of x0 + x1
        (0..20)
            .map(|i| {
                let t = i as f64 / 20.0;
                let (a, b) = (t - 0.5, (t * 7.0).sin() * 0.3);
                let label = usize::from(i % 2 == 0);
                let s = if label == 1 { 1.0 } else { -1.0 };
                (Tensor::vector(vec![s * (0.6 + a.abs()), s * 0.4 + b]), label)
            })
            .collect()
    }

    fn net() -> Network {
        Network::new(
            vec![2],
            vec![
                LayerSpec::Dense { inputs: 2, units: 4 },
                LayerSpec::Relu,
                LayerSpec::Dense { inputs: 4, units: 2 },
                LayerSpec::Softmax,
            ],
            11,
        )
        .unwrap()
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let out = train(net(), &toy(), &cfg).unwrap();
        assert_eq!(out.network, net());
        assert!(out.loss_curve.is_empty());
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let cfg = TrainConfig {
            epochs: 200,
            learning_rate: 0.1,
            batch_size: 4,
            seed: 3,
        };
        let data = toy();
        let out = train(net(), &data, &cfg).unwrap();
        let correct = data
            .iter()
            .filter(|(x, y)| out.network.forward(x).unwrap().argmax() == *y)
            .count();
        assert_eq!(correct, data.len());
        assert!(out.loss_curve.last().unwrap() < &out.loss_curve[0]);
    }

    #[test]
    fn fixed_seed_is_bit_reproducible() {
        let cfg = TrainConfig {
            epochs: 5,
            ..Default::default()
        };
        let a = train(net(), &toy(), &cfg).unwrap();
        let b = train(net(), &toy(), &cfg).unwrap();
        assert_eq!(a.network.params(), b.network.params());
        assert_eq!(a.loss_curve, b.loss_curve);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(matches!(
            train(net(), &[], &TrainConfig::default()),
            Err(Error::EmptyDataset)
        ));
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(train(net(), &toy(), &cfg).is_err());
    }

    #[test]
    fn divergence_reports_epoch() {
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 1e300,
            batch_size: 1,
            seed: 0,
        };
        match train(net(), &toy(), &cfg) {
            Err(Error::NonFiniteLoss { epoch }) => assert!(epoch < 50),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
