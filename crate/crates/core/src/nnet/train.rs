use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LayerSpec, Network};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Per-sample gradients are summed in fixed chunks of this many samples,
/// then the chunk sums are added in order. Sequential and parallel runs use
/// the same grouping, so their results agree bit for bit.
const GRADIENT_CHUNK: usize = 4;

/// Per-dimension z-score statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Population statistics over the selected rows; near-constant
    /// dimensions get std 1.
    pub fn fit(rows: &[Vec<f64>], select: &[usize]) -> Result<Self> {
        let Some(&first) = select.first() else {
            return Err(Error::Training("cannot standardize an empty set".into()));
        };
        let dim = rows[first].len();
        let n = select.len() as f64;
        let mut mean = vec![0.0; dim];
        for &i in select {
            for (m, v) in mean.iter_mut().zip(&rows[i]) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for &i in select {
            for ((s, v), m) in var.iter_mut().zip(&rows[i]).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn encode(&self, w: &mut Writer) {
        w.f64s(&self.mean).f64s(&self.std);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let mean = r.f64s()?;
        let std = r.f64s()?;
        if mean.len() != std.len() {
            return Err(Error::Format("standardizer mean/std lengths differ".into()));
        }
        if std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Format("standardizer std must be positive".into()));
        }
        Ok(Standardizer { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
    /// Fraction of samples held out for validation loss tracking.
    pub validation_fraction: Option<f64>,
    /// Fixed standardization; fitted on the training rows when `None`.
    pub input_norm: Option<Standardizer>,
    pub output_norm: Option<Standardizer>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 16,
            epochs: 100,
            rng_seed: 0,
            validation_fraction: None,
            input_norm: None,
            output_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if let Some(f) = self.validation_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config("validation_fraction must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

/// Input/target pairs with optional per-sample weights.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Self {
        Dataset {
            inputs,
            targets,
            weights: None,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    fn validate(&self, specs: &[LayerSpec]) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Training("empty dataset".into()));
        }
        if self.inputs.len() != self.targets.len() {
            return Err(Error::Training(format!(
                "{} inputs but {} targets",
                self.inputs.len(),
                self.targets.len()
            )));
        }
        let in_dim = specs[0].input_dim;
        let out_dim = specs[specs.len() - 1].output_dim;
        for (x, t) in self.inputs.iter().zip(&self.targets) {
            if x.len() != in_dim {
                return Err(Error::Dimension { expected: in_dim, got: x.len() });
            }
            if t.len() != out_dim {
                return Err(Error::Dimension { expected: out_dim, got: t.len() });
            }
            if x.iter().chain(t).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("training data"));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.inputs.len() || w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Training("weights must be positive, one per sample".into()));
            }
        }
        Ok(())
    }
}

/// A network together with the standardization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNetwork {
    pub network: Network,
    pub input_norm: Standardizer,
    pub output_norm: Standardizer,
}

impl TrainedNetwork {
    pub fn new(network: Network, input_norm: Standardizer, output_norm: Standardizer) -> Result<Self> {
        if input_norm.dim() != network.input_dim() {
            return Err(Error::Dimension { expected: network.input_dim(), got: input_norm.dim() });
        }
        if output_norm.dim() != network.output_dim() {
            return Err(Error::Dimension { expected: network.output_dim(), got: output_norm.dim() });
        }
        Ok(TrainedNetwork { network, input_norm, output_norm })
    }

    /// Forward pass in original units.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.network.input_dim() {
            return Err(Error::Dimension { expected: self.network.input_dim(), got: input.len() });
        }
        let z = self.network.forward(&self.input_norm.apply(input))?;
        Ok(self.output_norm.invert(&z))
    }

    pub fn input_dim(&self) -> usize {
        self.network.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.network.output_dim()
    }

    pub fn encode(&self, w: &mut Writer) {
        self.network.encode(w);
        self.input_norm.encode(w);
        self.output_norm.encode(w);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let network = Network::decode(r)?;
        let input_norm = Standardizer::decode(r)?;
        let output_norm = Standardizer::decode(r)?;
        TrainedNetwork::new(network, input_norm, output_norm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Weighted mean training loss before the first epoch and after each
    /// epoch, in standardized units.
    pub loss_history: Vec<f64>,
    pub validation_history: Vec<f64>,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.loss_history[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().unwrap()
    }
}

struct Standardized {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

fn mean_loss(net: &Network, data: &Standardized, weights: &Dataset, idx: &[usize], exec: Execution) -> f64 {
    let losses = par::map(exec, idx, |&i| {
        let y = net.trace(&data.inputs[i]).activations.pop().unwrap();
        let l: f64 = y.iter().zip(&data.targets[i]).map(|(a, b)| (a - b) * (a - b)).sum();
        weights.weight(i) * 0.5 * l
    });
    let wsum: f64 = idx.iter().map(|&i| weights.weight(i)).sum();
    losses.iter().sum::<f64>() / wsum
}

/// Mini-batch SGD on the weighted mean of `0.5 * ||y - t||^2`, in
/// standardized units. Deterministic given `cfg.rng_seed`, for either
/// execution mode.
pub fn train(specs: Vec<LayerSpec>, data: &Dataset, cfg: &TrainConfig, exec: Execution) -> Result<(TrainedNetwork, TrainReport)> {
    cfg.validate()?;
    let mut net = Network::new(specs, cfg.rng_seed)?;
    data.validate(net.specs())?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x5eed_0f5a_u64);
    let mut all: Vec<usize> = (0..data.len()).collect();
    let (train_idx, val_idx) = match cfg.validation_fraction {
        Some(f) => {
            all.shuffle(&mut rng);
            let n_val = (f * data.len() as f64).round() as usize;
            if n_val == 0 || n_val >= data.len() {
                return Err(Error::Training(format!(
                    "validation split of {f} leaves an empty side for {} samples",
                    data.len()
                )));
            }
            let val = all.split_off(data.len() - n_val);
            (all, val)
        }
        None => (all, Vec::new()),
    };

    let input_norm = match &cfg.input_norm {
        Some(s) => s.clone(),
        None => Standardizer::fit(&data.inputs, &train_idx)?,
    };
    let output_norm = match &cfg.output_norm {
        Some(s) => s.clone(),
        None => Standardizer::fit(&data.targets, &train_idx)?,
    };
    if input_norm.dim() != net.input_dim() || output_norm.dim() != net.output_dim() {
        return Err(Error::Training("standardizer dimensions do not match the network".into()));
    }
    let z = Standardized {
        inputs: data.inputs.iter().map(|x| input_norm.apply(x)).collect(),
        targets: data.targets.iter().map(|t| output_norm.apply(t)).collect(),
    };

    let check = |loss: f64, epoch: usize| {
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(Error::Training(format!(
                "loss became non-finite at epoch {epoch}; lower the learning rate"
            )))
        }
    };
    let mut loss_history = vec![check(mean_loss(&net, &z, data, &train_idx, exec), 0)?];
    let mut validation_history = Vec::new();
    if !val_idx.is_empty() {
        validation_history.push(mean_loss(&net, &z, data, &val_idx, exec));
    }

    let n_params = net.param_count();
    let mut order = train_idx.clone();
    let mut grad = vec![0.0; n_params];
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let wsum: f64 = batch.iter().map(|&i| data.weight(i)).sum();
            let chunks: Vec<&[usize]> = batch.chunks(GRADIENT_CHUNK).collect();
            let net_ref = &net;
            let partials = par::map(exec, &chunks, |chunk| {
                let mut g = vec![0.0; n_params];
                for &i in *chunk {
                    net_ref.accumulate_gradient(&z.inputs[i], &z.targets[i], data.weight(i) / wsum, &mut g);
                }
                g
            });
            grad.fill(0.0);
            for p in &partials {
                for (a, b) in grad.iter_mut().zip(p) {
                    *a += b;
                }
            }
            for (p, g) in net.params_mut().iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
        }
        loss_history.push(check(mean_loss(&net, &z, data, &train_idx, exec), epoch)?);
        if !val_idx.is_empty() {
            validation_history.push(mean_loss(&net, &z, data, &val_idx, exec));
        }
    }

    let trained = TrainedNetwork::new(net, input_norm, output_norm)?;
    Ok((
        trained,
        TrainReport {
            loss_history,
            validation_history,
            train_indices: train_idx,
            validation_indices: val_idx,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{mlp, Activation};
    use rand::Rng;

    fn random_rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect()
    }

    #[test]
    fn standardizer_fit_and_invert() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&rows, &[0, 1]).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
        assert_eq!(s.apply(&[3.0, 5.0]), vec![1.0, 0.0]);
        assert_eq!(s.invert(&s.apply(&[0.5, 7.0])), vec![0.5, 7.0]);
    }

    #[test]
    fn identity_task_converges() {
        let x = random_rows(200, 3, 5);
        let data = Dataset::new(x.clone(), x);
        let specs = vec![LayerSpec::new(3, 3, Activation::Identity)];
        let cfg = TrainConfig { epochs: 200, rng_seed: 1, ..TrainConfig::default() };
        let (_, report) = train(specs, &data, &cfg, Execution::Sequential).unwrap();
        assert!(report.final_loss() < 1e-3, "{}", report.final_loss());
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let x = random_rows(40, 2, 6);
        let t: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] * r[1]]).collect();
        let data = Dataset::new(x, t);
        let specs = mlp(2, &[5], 1);
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 5, rng_seed: 3, ..TrainConfig::default() };
        let (trained, report) = train(specs.clone(), &data, &cfg, Execution::default()).unwrap();
        assert_eq!(trained.network, Network::new(specs, 3).unwrap());
        assert!(report.loss_history.iter().all(|&l| l == report.loss_history[0]));
        assert_eq!(report.loss_history.len(), 6);
    }

    #[test]
    fn deterministic_across_execution_modes() {
        let x = random_rows(90, 4, 8);
        let t: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0].sin() + r[3], r[1] * r[2]]).collect();
        let data = Dataset::new(x, t);
        let cfg = TrainConfig { epochs: 4, rng_seed: 21, validation_fraction: Some(0.2), ..TrainConfig::default() };
        let (a, ra) = train(mlp(4, &[8, 8], 2), &data, &cfg, Execution::Sequential).unwrap();
        let (b, rb) = train(mlp(4, &[8, 8], 2), &data, &cfg, Execution::Parallel).unwrap();
        let (c, _) = train(mlp(4, &[8, 8], 2), &data, &cfg, Execution::Parallel).unwrap();
        let bits = |n: &TrainedNetwork| n.network.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(bits(&b), bits(&c));
        assert_eq!(ra, rb);
        assert_eq!(ra.validation_indices.len(), 18);
    }

    #[test]
    fn convex_loss_non_increasing() {
        let x = random_rows(64, 3, 12);
        let t: Vec<Vec<f64>> = x.iter().map(|r| vec![0.5 * r[0] - r[1] + 2.0 * r[2] + 0.3]).collect();
        let data = Dataset::new(x, t);
        let cfg = TrainConfig {
            learning_rate: 0.002,
            batch_size: 64,
            epochs: 50,
            rng_seed: 2,
            ..TrainConfig::default()
        };
        let (_, r) = train(vec![LayerSpec::new(3, 1, Activation::Identity)], &data, &cfg, Execution::Sequential).unwrap();
        for w in r.loss_history.windows(2) {
            assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn errors() {
        let specs = mlp(2, &[3], 1);
        let empty = Dataset::default();
        assert!(train(specs.clone(), &empty, &TrainConfig::default(), Execution::Sequential).is_err());
        let data = Dataset::new(vec![vec![1.0, 2.0]; 4], vec![vec![1.0]; 4]);
        let cfg = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(train(specs.clone(), &data, &cfg, Execution::Sequential).is_err());
        let bad = Dataset::new(vec![vec![1.0]; 4], vec![vec![1.0]; 4]);
        assert!(train(specs.clone(), &bad, &TrainConfig::default(), Execution::Sequential).is_err());
        let x = random_rows(20, 2, 1);
        let t: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] * 100.0]).collect();
        let cfg = TrainConfig { learning_rate: 1e6, epochs: 50, ..TrainConfig::default() };
        let diverged = train(specs, &Dataset::new(x, t), &cfg, Execution::Sequential);
        assert!(matches!(diverged, Err(Error::Training(_))), "{diverged:?}");
    }
}
