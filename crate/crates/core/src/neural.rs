//! Fully-connected Q-network trained with backpropagation and Adam.
//!
//! Hidden layers use ReLU, the output layer is linear. The loss is the mean
//! squared error of the *selected* action's output only; the other outputs of
//! a sample receive no gradient.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs x inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    pub fn weight_mut(&mut self, out: usize, inp: usize) -> &mut f64 {
        &mut self.weights[out * self.inputs + inp]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| {
            row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b
        }));
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    layers: Vec<Dense>,
}

impl QNetwork {
    /// Network with all weights and biases zero.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least an input and an output layer");
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    /// Fan-in scaled uniform initialization: every weight and bias of a layer
    /// with `n` inputs is drawn from `U(-1/sqrt(n), 1/sqrt(n))`, layer by
    /// layer, weights (row-major) before biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.gen_range(-bound..bound);
            }
        }
        net
    }

    /// Layer widths, input first.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// All parameters flattened: per layer, weights then biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            for p in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *p = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_len() {
            return Err(Error::Dimension {
                expected: self.input_len(),
                got: input.len(),
            });
        }
        Ok(())
    }

    /// Q-values for every action.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass keeping every layer's input for backpropagation.
    fn forward_cached(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.apply(acts.last().expect("non-empty"), &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }
}

/// Regression target for one sample: the action whose output is fitted and
/// the value it should take.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionTarget {
    pub action: usize,
    pub value: f64,
}

/// Mean squared error of a minibatch and its gradient, flattened in
/// [`QNetwork::parameters`] order.
pub fn loss_and_gradient<I: AsRef<[f64]>>(
    net: &QNetwork,
    inputs: &[I],
    targets: &[ActionTarget],
) -> Result<(f64, Vec<f64>)> {
    if inputs.len() != targets.len() {
        return Err(Error::Dimension {
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    let batch = inputs.len();
    let mut grad: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.param_count()]).collect();
    if batch == 0 {
        return Ok((0.0, grad.concat()));
    }
    let mut loss = 0.0;
    for (input, target) in inputs.iter().zip(targets) {
        let input = input.as_ref();
        net.check_input(input)?;
        if target.action >= net.output_len() {
            return Err(Error::Dimension {
                expected: net.output_len(),
                got: target.action + 1,
            });
        }
        let acts = net.forward_cached(input);
        let q = acts.last().expect("output")[target.action];
        let residual = q - target.value;
        loss += residual * residual;

        let mut delta = vec![0.0; net.output_len()];
        delta[target.action] = 2.0 * residual / batch as f64;
        for (li, layer) in net.layers.iter().enumerate().rev() {
            let a_in = &acts[li];
            let g = &mut grad[li];
            let (gw, gb) = g.split_at_mut(layer.weights.len());
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (gwi, &x) in gw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(a_in) {
                    *gwi += d * x;
                }
                gb[o] += d;
            }
            if li == 0 {
                break;
            }
            // Through the weights, then the ReLU of the layer below.
            let mut prev = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(&layer.weights[o * layer.inputs..(o + 1) * layer.inputs]) {
                    *p += d * w;
                }
            }
            for (p, &x) in prev.iter_mut().zip(a_in) {
                if x <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
    Ok((loss / batch as f64, grad.concat()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(net: &QNetwork, learning_rate: f64) -> Self {
        let n = net.param_count();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One bias-corrected Adam update of `params` along `grad`.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Dimension {
                expected: self.m.len(),
                got: params.len().min(grad.len()),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// One Adam step on a minibatch. Returns the loss before the update.
pub fn train_batch<I: AsRef<[f64]>>(
    net: &mut QNetwork,
    adam: &mut Adam,
    inputs: &[I],
    targets: &[ActionTarget],
) -> Result<f64> {
    if let Some(i) = targets.iter().position(|t| !t.value.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("target of sample {i} is {}", targets[i].value),
        });
    }
    let (loss, grad) = loss_and_gradient(net, inputs, targets)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: format!("minibatch loss {loss} over {} samples", targets.len()),
        });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("gradient component {i} is {}", grad[i]),
        });
    }
    let mut params = net.parameters();
    adam.update(&mut params, &grad)?;
    net.set_parameters(&params)?;
    Ok(loss)
}

/// Serialized network plus optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub sizes: Vec<usize>,
    pub network: QNetwork,
    pub adam: Adam,
}

impl Checkpoint {
    pub const FORMAT: &'static str = "mmplan-qnetwork/1";

    pub fn new(network: QNetwork, adam: Adam) -> Self {
        Self {
            format: Self::FORMAT.to_string(),
            sizes: network.sizes(),
            network,
            adam,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_slice(&fs::read(path)?)?;
        if ck.format != Self::FORMAT {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint format '{}'",
                ck.format
            )));
        }
        if ck.sizes != ck.network.sizes() || ck.adam.m.len() != ck.network.param_count() {
            return Err(Error::InvalidConfig("checkpoint layer sizes do not match its parameters".into()));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Straightforward matrix-math forward pass, independent of `Dense::apply`.
    fn naive_forward(net: &QNetwork, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let n = net.layers().len();
        for (k, l) in net.layers().iter().enumerate() {
            let mut z = vec![0.0; l.outputs()];
            for o in 0..l.outputs() {
                let mut s = l.bias()[o];
                for i in 0..l.inputs() {
                    s += l.weight(o, i) * a[i];
                }
                z[o] = if k + 1 < n && s < 0.0 { 0.0 } else { s };
            }
            a = z;
        }
        a
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = QNetwork::zeros(&[30, 100, 100, 29]);
        assert_eq!(net.forward(&[0.7; 30]).unwrap(), vec![0.0; 29]);
    }

    #[test]
    fn single_layer_selects_weight_column() {
        let mut net = QNetwork::zeros(&[3, 2]);
        let l = &mut net.layers_mut()[0];
        *l.weight_mut(0, 1) = 4.0;
        *l.weight_mut(1, 1) = -2.5;
        *l.weight_mut(0, 2) = 9.0;
        assert_eq!(net.forward(&[0.0, 1.0, 0.0]).unwrap(), vec![4.0, -2.5]);
    }

    #[test]
    fn forward_matches_naive_implementation() {
        let mut r = rng(1);
        for _ in 0..20 {
            let net = QNetwork::new(&[30, 100, 100, 29], &mut r);
            let x: Vec<f64> = (0..30).map(|_| r.gen_range(-1.0..1.0)).collect();
            let a = net.forward(&x).unwrap();
            let b = naive_forward(&net, &x);
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() <= 1e-10, "{p} vs {q}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = QNetwork::zeros(&[30, 29]);
        assert!(matches!(
            net.forward(&[0.0; 29]),
            Err(Error::Dimension { expected: 30, got: 29 })
        ));
    }

    #[test]
    fn zero_residual_leaves_parameters_unchanged() {
        let mut net = QNetwork::new(&[4, 3, 2], &mut rng(2));
        let x = [0.3, -0.2, 0.9, 0.1];
        let q = net.forward(&x).unwrap();
        let before = net.parameters();
        let mut adam = Adam::new(&net, 0.01);
        let loss = train_batch(&mut net, &mut adam, &[x], &[ActionTarget { action: 1, value: q[1] }]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(net.parameters(), before);
        assert_eq!(adam.step, 1);
    }

    fn central_difference(net: &QNetwork, inputs: &[Vec<f64>], targets: &[ActionTarget], h: f64) -> Vec<f64> {
        let base = net.parameters();
        let mut probe = net.clone();
        let loss = |n: &QNetwork| -> f64 {
            inputs
                .iter()
                .zip(targets)
                .map(|(x, t)| {
                    let r = naive_forward(n, x)[t.action] - t.value;
                    r * r
                })
                .sum::<f64>()
                / inputs.len() as f64
        };
        (0..base.len())
            .map(|i| {
                let mut p = base.clone();
                p[i] = base[i] + h;
                probe.set_parameters(&p).unwrap();
                let up = loss(&probe);
                p[i] = base[i] - h;
                probe.set_parameters(&p).unwrap();
                let down = loss(&probe);
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng(3);
        for _ in 0..10 {
            let net = QNetwork::new(&[4, 3, 2], &mut r);
            let inputs: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
            let targets: Vec<ActionTarget> = (0..5)
                .map(|_| ActionTarget {
                    action: r.gen_range(0..2),
                    value: r.gen_range(-2.0..2.0),
                })
                .collect();
            let (_, analytic) = loss_and_gradient(&net, &inputs, &targets).unwrap();
            let numeric = central_difference(&net, &inputs, &targets, 1e-5);
            for (a, n) in analytic.iter().zip(&numeric) {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
                assert!(rel < 1e-4, "analytic {a} numeric {n}");
            }
        }
    }

    #[test]
    fn unnamed_outputs_get_no_gradient() {
        // Output-layer rows of actions not named in the targets stay zero.
        let net = QNetwork::new(&[4, 3, 2], &mut rng(4));
        let inputs = vec![vec![0.5, 0.1, -0.4, 0.8]];
        let targets = [ActionTarget { action: 0, value: 3.0 }];
        let (_, grad) = loss_and_gradient(&net, &inputs, &targets).unwrap();
        let first_layer = 4 * 3 + 3;
        let out_w = &grad[first_layer..first_layer + 6];
        let out_b = &grad[first_layer + 6..];
        assert!(out_w[3..].iter().all(|&g| g == 0.0));
        assert_eq!(out_b[1], 0.0);
        assert!(out_b[0] != 0.0);
    }

    #[test]
    fn overfits_a_single_sample() {
        let mut net = QNetwork::new(&[4, 3, 2], &mut rng(5));
        let mut adam = Adam::new(&net, 0.01);
        let x = [[0.2, 0.4, 0.6, 0.8]];
        let t = [ActionTarget { action: 1, value: -1.5 }];
        let mut loss = f64::INFINITY;
        for _ in 0..1000 {
            train_batch(&mut net, &mut adam, &x, &t).unwrap();
            loss = loss_and_gradient(&net, &x, &t).unwrap().0;
        }
        assert!(loss < 1e-6, "loss {loss}");
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let run = || {
            let mut r = rng(6);
            let mut net = QNetwork::new(&[5, 8, 3], &mut r);
            let mut adam = Adam::new(&net, 0.01);
            for _ in 0..50 {
                let x: Vec<Vec<f64>> = (0..4).map(|_| (0..5).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
                let t: Vec<ActionTarget> = (0..4)
                    .map(|_| ActionTarget {
                        action: r.gen_range(0..3),
                        value: r.gen_range(-1.0..1.0),
                    })
                    .collect();
                train_batch(&mut net, &mut adam, &x, &t).unwrap();
            }
            net.parameters()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn non_finite_targets_are_rejected() {
        let mut net = QNetwork::zeros(&[2, 2]);
        let mut adam = Adam::new(&net, 0.01);
        let err = train_batch(&mut net, &mut adam, &[[1.0, 1.0]], &[ActionTarget { action: 0, value: f64::NAN }]);
        assert!(matches!(err, Err(Error::NonFinite { .. })));
        let mut big = QNetwork::zeros(&[1, 1]);
        big.set_parameters(&[f64::MAX, 0.0]).unwrap();
        let err = train_batch(&mut big, &mut adam, &[[f64::MAX]], &[ActionTarget { action: 0, value: 0.0 }]);
        assert!(matches!(err, Err(Error::NonFinite { .. }) | Err(Error::Dimension { .. })));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let net = QNetwork::new(&[30, 16, 29], &mut rng(7));
        let mut adam = Adam::new(&net, 0.01);
        let mut trained = net.clone();
        train_batch(&mut trained, &mut adam, &[[0.5; 30]], &[ActionTarget { action: 3, value: 1.0 }]).unwrap();
        Checkpoint::new(trained.clone(), adam.clone()).save(&path).unwrap();
        let ck = Checkpoint::load(&path).unwrap();
        assert_eq!(ck.network, trained);
        assert_eq!(ck.adam, adam);
        assert_eq!(ck.sizes, vec![30, 16, 29]);
    }
}
