//! Feed-forward networks trained with mini-batch SGD on squared error.
//!
//! Parameters live in one flat buffer, layer by layer, each layer storing
//! its row-major `output_dim x input_dim` weight matrix followed by its bias.
//! Gradients use the same layout.

mod gradcheck;
mod train;

pub use gradcheck::{gradient_check, max_relative_error, numeric_gradient};
pub use train::{train, Dataset, Standardizer, TrainConfig, TrainReport, TrainedNetwork};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Identity => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Identity),
            _ => Err(Error::Format(format!("unknown activation code {c}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            input_dim,
            output_dim,
            activation,
        }
    }

    fn param_count(&self) -> usize {
        self.output_dim * (self.input_dim + 1)
    }
}

/// `hidden.len()` tanh layers followed by an identity output layer.
pub fn mlp(input_dim: usize, hidden: &[usize], output_dim: usize) -> Vec<LayerSpec> {
    let mut dims = vec![input_dim];
    dims.extend_from_slice(hidden);
    dims.push(output_dim);
    let last = dims.len() - 2;
    dims.windows(2)
        .enumerate()
        .map(|(i, d)| {
            let act = if i == last { Activation::Identity } else { Activation::Tanh };
            LayerSpec::new(d[0], d[1], act)
        })
        .collect()
}

fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::invalid("network needs at least one layer"));
    }
    for s in specs {
        if s.input_dim == 0 || s.output_dim == 0 {
            return Err(Error::invalid("layer dimensions must be >= 1"));
        }
    }
    for pair in specs.windows(2) {
        if pair[0].output_dim != pair[1].input_dim {
            return Err(Error::Dimension {
                expected: pair[0].output_dim,
                got: pair[1].input_dim,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    specs: Vec<LayerSpec>,
    params: Vec<f64>,
    seed: u64,
}

/// Activations of every layer for one input, kept for backprop.
struct Trace {
    activations: Vec<Vec<f64>>,
}

impl Network {
    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn new(specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        validate_specs(&specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(specs.iter().map(LayerSpec::param_count).sum());
        for s in &specs {
            let limit = (6.0 / (s.input_dim + s.output_dim) as f64).sqrt();
            params.extend((0..s.input_dim * s.output_dim).map(|_| rng.random_range(-limit..=limit)));
            params.extend(std::iter::repeat_n(0.0, s.output_dim));
        }
        Ok(Network { specs, params, seed })
    }

    pub fn zeros(specs: Vec<LayerSpec>) -> Result<Self> {
        validate_specs(&specs)?;
        let n = specs.iter().map(LayerSpec::param_count).sum();
        Ok(Network {
            specs,
            params: vec![0.0; n],
            seed: 0,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.specs[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.specs[self.specs.len() - 1].output_dim
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offset of layer `l`'s weights in the flat buffer.
    fn layer_offset(&self, l: usize) -> usize {
        self.specs[..l].iter().map(LayerSpec::param_count).sum()
    }

    /// (weights, bias) of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let s = &self.specs[l];
        let off = self.layer_offset(l);
        let nw = s.input_dim * s.output_dim;
        (&self.params[off..off + nw], &self.params[off + nw..off + nw + s.output_dim])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let s = self.specs[l];
        let off = self.layer_offset(l);
        let nw = s.input_dim * s.output_dim;
        let (w, rest) = self.params[off..off + nw + s.output_dim].split_at_mut(nw);
        (w, rest)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        Ok(())
    }

    fn trace(&self, input: &[f64]) -> Trace {
        let mut activations = Vec::with_capacity(self.specs.len() + 1);
        activations.push(input.to_vec());
        let mut off = 0;
        for s in &self.specs {
            let nw = s.input_dim * s.output_dim;
            let w = &self.params[off..off + nw];
            let b = &self.params[off + nw..off + nw + s.output_dim];
            let prev = activations.last().unwrap();
            let out: Vec<f64> = (0..s.output_dim)
                .map(|o| {
                    let row = &w[o * s.input_dim..(o + 1) * s.input_dim];
                    let z = b[o] + row.iter().zip(prev).map(|(a, x)| a * x).sum::<f64>();
                    s.activation.apply(z)
                })
                .collect();
            activations.push(out);
            off += nw + s.output_dim;
        }
        Trace { activations }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.trace(input).activations.pop().unwrap())
    }

    /// Squared-error loss `0.5 * sum_k (y_k - t_k)^2` for one sample.
    pub fn loss(&self, input: &[f64], target: &[f64]) -> Result<f64> {
        let y = self.forward(input)?;
        if target.len() != y.len() {
            return Err(Error::Dimension {
                expected: y.len(),
                got: target.len(),
            });
        }
        Ok(0.5 * y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
    }

    /// Adds `scale * d(loss)/d(params)` for one sample into `grad`; returns
    /// the unscaled loss. Inputs are assumed validated.
    pub(crate) fn accumulate_gradient(&self, input: &[f64], target: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let trace = self.trace(input);
        let acts = &trace.activations;
        let out = acts.last().unwrap();
        let loss = 0.5 * out.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();

        let last = self.specs.len() - 1;
        let mut delta: Vec<f64> = out
            .iter()
            .zip(target)
            .map(|(y, t)| scale * (y - t) * self.specs[last].activation.derivative_from_output(*y))
            .collect();
        for l in (0..self.specs.len()).rev() {
            let s = &self.specs[l];
            let off = self.layer_offset(l);
            let nw = s.input_dim * s.output_dim;
            let prev = &acts[l];
            {
                let (gw, gb) = grad[off..off + nw + s.output_dim].split_at_mut(nw);
                for (o, d) in delta.iter().enumerate() {
                    let row = &mut gw[o * s.input_dim..(o + 1) * s.input_dim];
                    for (g, x) in row.iter_mut().zip(prev) {
                        *g += d * x;
                    }
                    gb[o] += d;
                }
            }
            if l > 0 {
                let w = &self.params[off..off + nw];
                let act = self.specs[l - 1].activation;
                let mut next = vec![0.0; s.input_dim];
                for (o, d) in delta.iter().enumerate() {
                    let row = &w[o * s.input_dim..(o + 1) * s.input_dim];
                    for (n, wv) in next.iter_mut().zip(row) {
                        *n += wv * d;
                    }
                }
                for (n, a) in next.iter_mut().zip(prev) {
                    *n *= act.derivative_from_output(*a);
                }
                delta = next;
            }
        }
        loss
    }

    /// Analytic gradient of the single-sample loss.
    pub fn gradient(&self, input: &[f64], target: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        if target.len() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                got: target.len(),
            });
        }
        let mut g = vec![0.0; self.params.len()];
        self.accumulate_gradient(input, target, 1.0, &mut g);
        Ok(g)
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u32(self.specs.len() as u32);
        for s in &self.specs {
            w.usize(s.input_dim).usize(s.output_dim).u8(s.activation.code());
        }
        w.u64(self.seed).f64s(&self.params);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let n = r.u32()? as usize;
        let mut specs = Vec::with_capacity(n);
        for _ in 0..n {
            let input = r.usize()?;
            let output = r.usize()?;
            specs.push(LayerSpec::new(input, output, Activation::from_code(r.u8()?)?));
        }
        validate_specs(&specs)?;
        let seed = r.u64()?;
        let params = r.f64s()?;
        let expected: usize = specs.iter().map(LayerSpec::param_count).sum();
        if params.len() != expected {
            return Err(Error::Format(format!(
                "network has {} parameters, layout needs {expected}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(Network { specs, params, seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_layout() {
        let s = mlp(5, &[8, 4], 2);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], LayerSpec::new(5, 8, Activation::Tanh));
        assert_eq!(s[2], LayerSpec::new(4, 2, Activation::Identity));
        let net = Network::new(s, 1).unwrap();
        assert_eq!(net.param_count(), 5 * 8 + 8 + 8 * 4 + 4 + 4 * 2 + 2);
    }

    #[test]
    fn chain_mismatch_rejected() {
        let specs = vec![
            LayerSpec::new(3, 4, Activation::Tanh),
            LayerSpec::new(5, 1, Activation::Identity),
        ];
        assert!(Network::new(specs, 0).is_err());
        assert!(Network::new(vec![], 0).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::zeros(mlp(4, &[3], 2)).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_through() {
        let mut net = Network::zeros(vec![LayerSpec::new(3, 3, Activation::Identity)]).unwrap();
        let (w, _) = net.layer_mut(0);
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        assert_eq!(net.forward(&[0.25, -7.0, 3.5]).unwrap(), vec![0.25, -7.0, 3.5]);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let net = Network::new(mlp(2, &[3], 1), 0).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
        assert!(matches!(net.forward(&[1.0, f64::NAN]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn glorot_bounds() {
        let net = Network::new(mlp(10, &[20], 5), 3).unwrap();
        let (w, b) = net.layer(0);
        let limit = (6.0f64 / 30.0).sqrt();
        assert!(w.iter().all(|v| v.abs() <= limit));
        assert!(b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_closed_form_gradient() {
        let mut net = Network::zeros(vec![LayerSpec::new(1, 1, Activation::Identity)]).unwrap();
        net.params_mut()[0] = 0.7;
        let (x, y) = (1.3, 2.0);
        let g = net.gradient(&[x], &[y]).unwrap();
        assert!((g[0] - (0.7 * x - y) * x).abs() < 1e-15);
        assert!((g[1] - (0.7 * x - y)).abs() < 1e-15);
    }

    #[test]
    fn encode_round_trip_exact() {
        let net = Network::new(mlp(3, &[4], 2), 99).unwrap();
        let mut w = Writer::new();
        net.encode(&mut w);
        let bytes = w.into_inner();
        let mut r = Reader::new(&bytes);
        let back = Network::decode(&mut r).unwrap();
        r.finish().unwrap();
        assert_eq!(net, back);
    }
}
