//! Fully connected networks with hand-written reverse mode.
//!
//! Every hidden layer is `linear -> RMSNorm (learned gain) -> squareplus`;
//! the output layer is linear. Weights are row-major `(out, in)`.
//!
//! A forward pass records its intermediates in a [`Tape`]; [`MlpParams::backward`]
//! replays the tape in reverse and *adds* parameter gradients into a
//! [`GradBuffer`], so several backward passes (one per sample of a batch) can
//! share a buffer.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::activation::{squareplus, squareplus_sigmoid, RMS_NORM_EPS, SQUAREPLUS_B};
use crate::checkpoint::Container;
use crate::error::{Error, Result};

/// Four independent accumulators so the compiler can vectorize.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `(out_dim, in_dim)`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    /// RMSNorm gain; empty on the (linear) output layer.
    pub gain: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize, hidden: bool) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            gain: if hidden {
                vec![0.0; out_dim]
            } else {
                Vec::new()
            },
        }
    }

    pub fn is_hidden(&self) -> bool {
        !self.gain.is_empty()
    }

    pub fn tensors(&self) -> [&[f64]; 3] {
        [&self.weight, &self.bias, &self.gain]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 3] {
        [&mut self.weight, &mut self.bias, &mut self.gain]
    }
}

/// Parameters of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub layer_sizes: Vec<usize>,
    pub seed: u64,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    pub layers: Vec<Layer>,
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config(format!(
            "network needs at least input and output sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Config(format!(
            "layer sizes must be positive: {layer_sizes:?}"
        )));
    }
    Ok(())
}

fn zero_layers(layer_sizes: &[usize]) -> Vec<Layer> {
    let n = layer_sizes.len() - 1;
    layer_sizes
        .windows(2)
        .enumerate()
        .map(|(i, w)| Layer::zeros(w[0], w[1], i + 1 < n))
        .collect()
}

impl MlpParams {
    /// Uniform `±sqrt(1/fan_in)` weights, zero biases, unit gains.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = zero_layers(layer_sizes);
        for layer in &mut layers {
            let limit = (1.0 / layer.in_dim as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            for w in &mut layer.weight {
                *w = dist.sample(&mut rng);
            }
            layer.gain.iter_mut().for_each(|g| *g = 1.0);
        }
        Ok(Self {
            layers,
            layer_sizes: layer_sizes.to_vec(),
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len() + l.gain.len())
            .sum()
    }

    /// Zeroes the output layer so the network starts at a constant output.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().unwrap();
        last.weight.iter_mut().for_each(|w| *w = 0.0);
        last.bias.iter_mut().for_each(|b| *b = 0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.tensors().iter().all(|t| t.iter().all(|v| v.is_finite())))
    }

    pub fn same_shape(&self, layers: &[Layer]) -> bool {
        self.layers.len() == layers.len()
            && self.layers.iter().zip(layers).all(|(a, b)| {
                a.weight.len() == b.weight.len()
                    && a.bias.len() == b.bias.len()
                    && a.gain.len() == b.gain.len()
            })
    }

    pub fn grad_buffer(&self) -> GradBuffer {
        GradBuffer {
            layers: zero_layers(&self.layer_sizes),
        }
    }

    /// Runs the network, recording intermediates in `tape`, and returns the output.
    pub fn forward<'t>(&self, input: &[f64], tape: &'t mut Tape) -> Result<&'t [f64]> {
        if input.len() != self.input_dim() {
            return Err(Error::Config(format!(
                "network input has {} entries, expected {}",
                input.len(),
                self.input_dim()
            )));
        }
        tape.prepare(&self.layers);
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = tape.caches.split_at_mut(i);
            let cache = &mut rest[0];
            match done.last() {
                Some(prev) => cache.input.copy_from_slice(&prev.output),
                None => cache.input.copy_from_slice(input),
            }
            let x = &cache.input;
            let z = &mut cache.normed;
            for ((zo, row), b) in z
                .iter_mut()
                .zip(layer.weight.chunks_exact(layer.in_dim))
                .zip(&layer.bias)
            {
                *zo = b + dot(row, x);
            }
            if layer.is_hidden() {
                let ms = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
                let rms = (ms + RMS_NORM_EPS).sqrt();
                cache.rms = rms;
                let inv = 1.0 / rms;
                for (((zo, g), pre), out) in z
                    .iter_mut()
                    .zip(&layer.gain)
                    .zip(cache.pre_act.iter_mut())
                    .zip(cache.output.iter_mut())
                {
                    *zo *= inv;
                    *pre = g * *zo;
                    *out = squareplus(*pre, SQUAREPLUS_B);
                }
            } else {
                cache.output.copy_from_slice(z);
            }
        }
        tape.ready = true;
        Ok(&tape.caches.last().unwrap().output)
    }

    /// Allocating convenience forward.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::default();
        Ok(self.forward(input, &mut tape)?.to_vec())
    }

    /// Reverse-mode pass for the forward recorded in `tape`.
    ///
    /// Parameter gradients are added into `grads` when given; the input
    /// cotangent is written to `input_grad` when given.
    pub fn backward(
        &self,
        tape: &Tape,
        upstream: &[f64],
        mut grads: Option<&mut GradBuffer>,
        input_grad: Option<&mut Vec<f64>>,
    ) -> Result<()> {
        if !tape.ready || !tape.matches(&self.layers) {
            return Err(Error::State(
                "backward called without a matching forward pass".into(),
            ));
        }
        if upstream.len() != self.output_dim() {
            return Err(Error::Config(format!(
                "upstream cotangent has {} entries, expected {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        if let Some(g) = grads.as_deref() {
            if !self.same_shape(&g.layers) {
                return Err(Error::Config("gradient buffer shape mismatch".into()));
            }
        }
        let mut delta = upstream.to_vec();
        let mut next = Vec::new();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let cache = &tape.caches[i];
            if layer.is_hidden() {
                // delta: cotangent of the layer output; turn it into dL/dz.
                let mut dot = 0.0;
                for o in 0..layer.out_dim {
                    let dh = delta[o] * squareplus_sigmoid(cache.pre_act[o]);
                    if let Some(g) = grads.as_deref_mut() {
                        g.layers[i].gain[o] += dh * cache.normed[o];
                    }
                    let dn = dh * layer.gain[o];
                    delta[o] = dn;
                    dot += dn * cache.normed[o];
                }
                let mean = dot / layer.out_dim as f64;
                for o in 0..layer.out_dim {
                    delta[o] = (delta[o] - cache.normed[o] * mean) / cache.rms;
                }
            }
            if let Some(g) = grads.as_deref_mut() {
                let gl = &mut g.layers[i];
                for ((gb, row), &d) in gl
                    .bias
                    .iter_mut()
                    .zip(gl.weight.chunks_exact_mut(layer.in_dim))
                    .zip(&delta)
                {
                    *gb += d;
                    for (w, x) in row.iter_mut().zip(&cache.input) {
                        *w += d * x;
                    }
                }
            }
            if i == 0 && input_grad.is_none() {
                break;
            }
            next.clear();
            next.resize(layer.in_dim, 0.0);
            for (row, &d) in layer.weight.chunks_exact(layer.in_dim).zip(&delta) {
                if d == 0.0 {
                    continue;
                }
                for (n, w) in next.iter_mut().zip(row) {
                    *n += d * w;
                }
            }
            std::mem::swap(&mut delta, &mut next);
        }
        if let Some(out) = input_grad {
            out.clear();
            out.extend_from_slice(&delta);
        }
        Ok(())
    }

    /// Writes every tensor under `prefix` plus the layer-size manifest.
    pub fn export(&self, prefix: &str, out: &mut Container) {
        out.insert(
            format!("{prefix}.layer_sizes"),
            self.layer_sizes.iter().map(|&n| n as f64).collect(),
        );
        out.insert(format!("{prefix}.seed"), vec![self.seed as f64]);
        for (i, l) in self.layers.iter().enumerate() {
            out.insert(format!("{prefix}.{i}.weight"), l.weight.clone());
            out.insert(format!("{prefix}.{i}.bias"), l.bias.clone());
            if l.is_hidden() {
                out.insert(format!("{prefix}.{i}.gain"), l.gain.clone());
            }
        }
    }

    pub fn import(prefix: &str, src: &Container) -> Result<Self> {
        let sizes: Vec<usize> = src
            .get(&format!("{prefix}.layer_sizes"))?
            .iter()
            .map(|&v| v as usize)
            .collect();
        check_sizes(&sizes)?;
        let seed = src
            .get(&format!("{prefix}.seed"))?
            .first()
            .copied()
            .unwrap_or(0.0) as u64;
        let mut layers = zero_layers(&sizes);
        for (i, l) in layers.iter_mut().enumerate() {
            let hidden = l.is_hidden();
            l.weight = src
                .get_len(&format!("{prefix}.{i}.weight"), l.weight.len())?
                .to_vec();
            l.bias = src
                .get_len(&format!("{prefix}.{i}.bias"), l.bias.len())?
                .to_vec();
            if hidden {
                l.gain = src
                    .get_len(&format!("{prefix}.{i}.gain"), l.gain.len())?
                    .to_vec();
            }
        }
        Ok(Self {
            layers,
            layer_sizes: sizes,
            seed,
        })
    }
}

impl GradBuffer {
    pub fn zero(&mut self) {
        for l in &mut self.layers {
            for t in l.tensors_mut() {
                t.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            for t in l.tensors_mut() {
                t.iter_mut().for_each(|v| *v *= factor);
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| {
                l.tensors()
                    .into_iter()
                    .flatten()
                    .copied()
                    .collect::<Vec<_>>()
            })
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Default)]
struct LayerCache {
    input: Vec<f64>,
    /// `z` for the output layer, `z / rms` for hidden layers.
    normed: Vec<f64>,
    pre_act: Vec<f64>,
    rms: f64,
    output: Vec<f64>,
}

/// Forward intermediates; reusable across calls to avoid reallocating.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    caches: Vec<LayerCache>,
    ready: bool,
}

impl Tape {
    pub fn clear(&mut self) {
        self.ready = false;
    }

    pub fn output(&self) -> Option<&[f64]> {
        if self.ready {
            self.caches.last().map(|c| c.output.as_slice())
        } else {
            None
        }
    }

    fn matches(&self, layers: &[Layer]) -> bool {
        self.caches.len() == layers.len()
            && self
                .caches
                .iter()
                .zip(layers)
                .all(|(c, l)| c.input.len() == l.in_dim && c.output.len() == l.out_dim)
    }

    fn prepare(&mut self, layers: &[Layer]) {
        self.ready = false;
        if self.matches(layers) {
            return;
        }
        self.caches = layers
            .iter()
            .map(|l| LayerCache {
                input: vec![0.0; l.in_dim],
                normed: vec![0.0; l.out_dim],
                pre_act: vec![0.0; l.out_dim],
                rms: 1.0,
                output: vec![0.0; l.out_dim],
            })
            .collect();
    }
}

/// Polyak averaging: `target <- (1 - tau) target + tau online`.
pub fn soft_update(target: &mut MlpParams, online: &MlpParams, tau: f64) {
    assert!(
        target.same_shape(&online.layers),
        "soft_update: shape mismatch"
    );
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        for (tt, ot) in t.tensors_mut().into_iter().zip(o.tensors()) {
            for (a, b) in tt.iter_mut().zip(ot) {
                *a = (1.0 - tau) * *a + tau * b;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight-line re-implementation of the layer formulas.
    fn oracle_forward(p: &MlpParams, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in &p.layers {
            let mut z = vec![0.0; l.out_dim];
            for o in 0..l.out_dim {
                z[o] = l.bias[o];
                for i in 0..l.in_dim {
                    z[o] += l.weight[o * l.in_dim + i] * h[i];
                }
            }
            if l.is_hidden() {
                let ms: f64 = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
                let r = (ms + 1e-8).sqrt();
                h = z
                    .iter()
                    .zip(&l.gain)
                    .map(|(v, g)| {
                        let a = g * v / r;
                        (a + (a * a + 4.0).sqrt()) / 2.0
                    })
                    .collect();
            } else {
                h = z;
            }
        }
        h
    }

    fn loss_of(p: &MlpParams, x: &[f64], w: &[f64]) -> f64 {
        p.predict(x)
            .unwrap()
            .iter()
            .zip(w)
            .map(|(a, b)| a * b)
            .sum()
    }

    #[test]
    fn zero_network_outputs_bias() {
        let mut p = MlpParams::new(&[3, 5, 2], 1).unwrap();
        for l in &mut p.layers {
            l.weight.iter_mut().for_each(|w| *w = 0.0);
        }
        p.layers[1].bias = vec![0.7, -1.5];
        assert_eq!(p.predict(&[1.0, 2.0, 3.0]).unwrap(), vec![0.7, -1.5]);
    }

    #[test]
    fn identity_linear_layer() {
        let mut p = MlpParams::new(&[3, 3], 0).unwrap();
        p.layers[0].weight = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let x = [0.3, -2.0, 5.0];
        assert_eq!(p.predict(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn forward_matches_oracle() {
        let p = MlpParams::new(&[2, 2, 2], 42).unwrap();
        let x = [0.1, -0.2];
        let out = p.predict(&x).unwrap();
        for (a, b) in out.iter().zip(oracle_forward(&p, &x)) {
            assert!((a - b).abs() < 1e-12);
        }
        let p = MlpParams::new(&[4, 8, 8, 3], 7).unwrap();
        let x = [0.5, -1.0, 2.0, 0.0];
        let out = p.predict(&x).unwrap();
        for (a, b) in out.iter().zip(oracle_forward(&p, &x)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let p = MlpParams::new(&[3, 16, 16, 2], 9).unwrap();
        let x = [0.25, -0.5, 1.25];
        let a = p.predict(&x).unwrap();
        let b = p.predict(&x).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let p = MlpParams::new(&[3, 4, 1], 0).unwrap();
        assert!(matches!(p.predict(&[1.0]), Err(Error::Config(_))));
        assert!(MlpParams::new(&[3], 0).is_err());
        assert!(MlpParams::new(&[3, 0, 1], 0).is_err());
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let p = MlpParams::new(&[2, 3, 1], 0).unwrap();
        let tape = Tape::default();
        let mut g = p.grad_buffer();
        let r = p.backward(&tape, &[1.0], Some(&mut g), None);
        assert!(matches!(r, Err(Error::State(_))));
    }

    #[test]
    fn single_neuron_chain_rule() {
        let mut p = MlpParams::new(&[1, 1], 0).unwrap();
        p.layers[0].weight = vec![0.4];
        p.layers[0].bias = vec![0.1];
        let mut tape = Tape::default();
        p.forward(&[3.0], &mut tape).unwrap();
        let mut g = p.grad_buffer();
        let mut dx = Vec::new();
        p.backward(&tape, &[1.0], Some(&mut g), Some(&mut dx))
            .unwrap();
        assert_eq!(g.layers[0].weight, vec![3.0]);
        assert_eq!(g.layers[0].bias, vec![1.0]);
        assert_eq!(dx, vec![0.4]);
        // Accumulates additively.
        p.backward(&tape, &[1.0], Some(&mut g), None).unwrap();
        assert_eq!(g.layers[0].weight, vec![6.0]);
    }

    #[test]
    fn stationary_point_has_zero_gradient() {
        // Output exactly zero => d(1/2 |y|^2)/dy = y = 0.
        let mut p = MlpParams::new(&[3, 4, 2], 3).unwrap();
        p.layers[1].weight.iter_mut().for_each(|w| *w = 0.0);
        let mut tape = Tape::default();
        let y = p.forward(&[1.0, -1.0, 0.5], &mut tape).unwrap().to_vec();
        assert_eq!(y, vec![0.0, 0.0]);
        let mut g = p.grad_buffer();
        p.backward(&tape, &y, Some(&mut g), None).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = MlpParams::new(&[4, 8, 8, 1], 11).unwrap();
        let x = [0.3, -0.7, 1.1, 0.05];
        let w = [1.0];
        let mut tape = Tape::default();
        p.forward(&x, &mut tape).unwrap();
        let mut g = p.grad_buffer();
        let mut dx = Vec::new();
        p.backward(&tape, &w, Some(&mut g), Some(&mut dx)).unwrap();
        let h = 1e-5;
        for li in 0..p.layers.len() {
            for ti in 0..3 {
                for k in 0..p.layers[li].tensors()[ti].len() {
                    let mut plus = p.clone();
                    plus.layers[li].tensors_mut()[ti][k] += h;
                    let mut minus = p.clone();
                    minus.layers[li].tensors_mut()[ti][k] -= h;
                    let fd = (loss_of(&plus, &x, &w) - loss_of(&minus, &x, &w)) / (2.0 * h);
                    let an = g.layers[li].tensors()[ti][k];
                    let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                    assert!(
                        err < 1e-4,
                        "layer {li} tensor {ti} idx {k}: fd {fd} vs {an}"
                    );
                }
            }
        }
        for i in 0..x.len() {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let fd = (loss_of(&p, &xp, &w) - loss_of(&p, &xm, &w)) / (2.0 * h);
            assert!((fd - dx[i]).abs() / fd.abs().max(1e-6) < 1e-4);
        }
    }

    #[test]
    fn soft_update_rules() {
        let online = MlpParams::new(&[2, 3, 1], 1).unwrap();
        let mut target = MlpParams::new(&[2, 3, 1], 2).unwrap();
        soft_update(&mut target, &online, 1.0);
        assert_eq!(target.layers, online.layers);

        let mut t = MlpParams::new(&[1, 1], 0).unwrap();
        let mut o = t.clone();
        t.layers[0].weight = vec![0.0];
        o.layers[0].weight = vec![2.0];
        soft_update(&mut t, &o, 0.5);
        assert_eq!(t.layers[0].weight, vec![1.0]);

        // Geometric convergence with frozen online parameters.
        let mut t = MlpParams::new(&[1, 1], 0).unwrap();
        t.layers[0].weight = vec![0.0];
        let tau = 0.1;
        for k in 1..=20 {
            soft_update(&mut t, &o, tau);
            let gap = (t.layers[0].weight[0] - 2.0).abs();
            assert!((gap - 2.0 * (1.0 - tau).powi(k)).abs() < 1e-12);
        }
    }
}
