//! Minimal dense-network numerical core: MLP forward/backward passes with
//! gradients w.r.t. both parameters and inputs, plus a hand-rolled Adam
//! optimizer. Everything is f64 and deterministic given explicit seeds.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State and parameter vectors are plain `Vec<f64>`.
pub type Vec64 = Vec<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Identity,
    Tanh,
}

/// Fully-connected network. Weights are stored per layer, row-major
/// `[out_dim][in_dim]`; the flattened parameter layout is, per layer,
/// all weights followed by all biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec64>,
    pub biases: Vec<Vec64>,
    pub activation: Activation,
    pub output_activation: OutputActivation,
}

fn act(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Tanh => x.tanh(),
        Activation::Relu => x.max(0.0),
    }
}

// Derivative expressed in terms of the pre-activation input.
fn act_deriv(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Tanh => {
            let t = x.tanh();
            1.0 - t * t
        }
        Activation::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

impl Mlp {
    /// Deterministic seeded init: weights uniform on ±sqrt(3/fan_in), so the
    /// empirical std is 1/sqrt(fan_in); biases zero.
    pub fn init(
        layer_sizes: &[usize],
        activation: Activation,
        output_activation: OutputActivation,
        seed: u64,
    ) -> Self {
        Self::init_scaled(layer_sizes, activation, output_activation, 1.0, seed)
    }

    /// Same as [`Mlp::init`] but the final layer's weights are multiplied by
    /// `final_scale` (used to start actors near zero output).
    pub fn init_scaled(
        layer_sizes: &[usize],
        activation: Activation,
        output_activation: OutputActivation,
        final_scale: f64,
        seed: u64,
    ) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output layer");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let n_layers = layer_sizes.len() - 1;
        for l in 0..n_layers {
            let fan_in = layer_sizes[l];
            let fan_out = layer_sizes[l + 1];
            let mut bound = (3.0 / fan_in as f64).sqrt();
            if l == n_layers - 1 {
                bound *= final_scale;
            }
            let w: Vec64 = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Mlp {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation,
            output_activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    pub fn flatten(&self) -> Vec64 {
        let mut out = Vec::with_capacity(self.param_count());
        for l in 0..self.weights.len() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut idx = 0;
        for l in 0..self.weights.len() {
            let nw = self.weights[l].len();
            self.weights[l].copy_from_slice(&flat[idx..idx + nw]);
            idx += nw;
            let nb = self.biases[l].len();
            self.biases[l].copy_from_slice(&flat[idx..idx + nb]);
            idx += nb;
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec64> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "mlp forward: input length {} != first layer size {}",
                input.len(),
                self.input_dim()
            )));
        }
        let n_layers = self.weights.len();
        let mut h = input.to_vec();
        for l in 0..n_layers {
            let fan_in = self.layer_sizes[l];
            let fan_out = self.layer_sizes[l + 1];
            let w = &self.weights[l];
            let mut z = self.biases[l].clone();
            for (o, zo) in z.iter_mut().enumerate().take(fan_out) {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let mut s = 0.0;
                for (wi, hi) in row.iter().zip(h.iter()) {
                    s += wi * hi;
                }
                *zo += s;
            }
            if l + 1 < n_layers {
                for zo in z.iter_mut() {
                    *zo = act(self.activation, *zo);
                }
            } else if self.output_activation == OutputActivation::Tanh {
                for zo in z.iter_mut() {
                    *zo = zo.tanh();
                }
            }
            h = z;
        }
        Ok(h)
    }

    /// Backprop for the scalar objective `<forward(input), output_grad>`.
    /// Returns the gradient w.r.t. the flattened parameters and the input.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<(Vec64, Vec64)> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(
                "mlp backward: input length".into(),
            ));
        }
        if output_grad.len() != self.output_dim() {
            return Err(Error::DimensionMismatch(
                "mlp backward: output_grad length".into(),
            ));
        }
        let n_layers = self.weights.len();
        // Forward pass caching pre-activations and post-activations.
        let mut posts: Vec<Vec64> = Vec::with_capacity(n_layers + 1);
        let mut pres: Vec<Vec64> = Vec::with_capacity(n_layers);
        posts.push(input.to_vec());
        for l in 0..n_layers {
            let fan_in = self.layer_sizes[l];
            let fan_out = self.layer_sizes[l + 1];
            let w = &self.weights[l];
            let h = &posts[l];
            let mut z = self.biases[l].clone();
            for (o, zo) in z.iter_mut().enumerate().take(fan_out) {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let mut s = 0.0;
                for (wi, hi) in row.iter().zip(h.iter()) {
                    s += wi * hi;
                }
                *zo += s;
            }
            pres.push(z.clone());
            if l + 1 < n_layers {
                for zo in z.iter_mut() {
                    *zo = act(self.activation, *zo);
                }
            } else if self.output_activation == OutputActivation::Tanh {
                for zo in z.iter_mut() {
                    *zo = zo.tanh();
                }
            }
            posts.push(z);
        }

        // delta at the output layer.
        let mut delta: Vec64 = match self.output_activation {
            OutputActivation::Identity => output_grad.to_vec(),
            OutputActivation::Tanh => pres[n_layers - 1]
                .iter()
                .zip(output_grad.iter())
                .map(|(z, g)| {
                    let t = z.tanh();
                    g * (1.0 - t * t)
                })
                .collect(),
        };

        let mut param_grad = vec![0.0; self.param_count()];
        // Offsets of each layer's block in the flattened layout.
        let mut offsets = Vec::with_capacity(n_layers);
        let mut idx = 0;
        for l in 0..n_layers {
            offsets.push(idx);
            idx += (self.layer_sizes[l] + 1) * self.layer_sizes[l + 1];
        }

        for l in (0..n_layers).rev() {
            let fan_in = self.layer_sizes[l];
            let fan_out = self.layer_sizes[l + 1];
            let h = &posts[l];
            let base = offsets[l];
            // dW = delta h^T, db = delta
            for o in 0..fan_out {
                let d = delta[o];
                let wrow = &mut param_grad[base + o * fan_in..base + (o + 1) * fan_in];
                for (wg, hi) in wrow.iter_mut().zip(h.iter()) {
                    *wg = d * hi;
                }
            }
            let bbase = base + fan_in * fan_out;
            param_grad[bbase..bbase + fan_out].copy_from_slice(&delta);

            // propagate to previous layer
            let w = &self.weights[l];
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (p, wi) in prev.iter_mut().zip(row.iter()) {
                    *p += d * wi;
                }
            }
            if l > 0 {
                for (p, z) in prev.iter_mut().zip(pres[l - 1].iter()) {
                    *p *= act_deriv(self.activation, *z);
                }
            }
            delta = prev;
        }
        let input_grad = delta;
        Ok((param_grad, input_grad))
    }
}

/// Adam with bias correction. Tracks one parameter vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub first_moment: Vec64,
    pub second_moment: Vec64,
    pub step_count: u64,
}

impl Adam {
    pub fn new(dim: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: vec![0.0; dim],
            second_moment: vec![0.0; dim],
            step_count: 0,
        }
    }

    /// One update in place. Rejects non-finite gradients (diverged training).
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grad.len() != params.len() {
            return Err(Error::DimensionMismatch(format!(
                "adam: params {} grad {} moments {}",
                params.len(),
                grad.len(),
                self.first_moment.len()
            )));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged("non-finite gradient in adam step".into()));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.first_moment[i] = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            self.second_moment[i] =
                self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first_moment[i] / bc1;
            let v_hat = self.second_moment[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec64 {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = Mlp::init(&[3, 4, 2], Activation::Tanh, OutputActivation::Identity, 0);
        for w in net.weights.iter_mut() {
            w.iter_mut().for_each(|x| *x = 0.0);
        }
        let out = net.forward(&[0.3, -0.7, 1.1]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer() {
        let mut net = Mlp::init(&[3, 3], Activation::Tanh, OutputActivation::Identity, 0);
        net.weights[0] = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        net.biases[0] = vec![0.0; 3];
        let x = vec![0.5, -0.25, 2.0];
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    // Independent straight-line re-implementation of the same matrix chain,
    // written against the stored weights directly.
    fn oracle_forward(net: &Mlp, input: &[f64]) -> Vec64 {
        let mut h = input.to_vec();
        for l in 0..net.weights.len() {
            let fan_in = net.layer_sizes[l];
            let fan_out = net.layer_sizes[l + 1];
            let mut next = vec![0.0; fan_out];
            for o in 0..fan_out {
                let mut s = net.biases[l][o];
                for i in 0..fan_in {
                    s += net.weights[l][o * fan_in + i] * h[i];
                }
                next[o] = if l + 1 < net.weights.len() {
                    match net.activation {
                        Activation::Tanh => s.tanh(),
                        Activation::Relu => s.max(0.0),
                    }
                } else {
                    match net.output_activation {
                        OutputActivation::Identity => s,
                        OutputActivation::Tanh => s.tanh(),
                    }
                };
            }
            h = next;
        }
        h
    }

    #[test]
    fn forward_matches_independent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..20 {
            let net = Mlp::init(
                &[4, 6, 5, 2],
                if case % 2 == 0 { Activation::Tanh } else { Activation::Relu },
                OutputActivation::Identity,
                case,
            );
            let x = random_vec(&mut rng, 4);
            let got = net.forward(&x).unwrap();
            let want = oracle_forward(&net, &x);
            for (g, w) in got.iter().zip(want.iter()) {
                let rel = (g - w).abs() / w.abs().max(1e-12);
                assert!(rel < 1e-12, "forward mismatch: {g} vs {w}");
            }
        }
    }

    #[test]
    fn backward_zero_output_grad_is_zero() {
        let net = Mlp::init(&[3, 5, 2], Activation::Tanh, OutputActivation::Identity, 1);
        let (pg, ig) = net.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(pg.iter().all(|&x| x == 0.0));
        assert!(ig.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn backward_linear_layer_outer_product() {
        let net = Mlp::init(&[3, 2], Activation::Tanh, OutputActivation::Identity, 2);
        let x = [0.5, -1.0, 2.0];
        let g = [2.0, -3.0];
        let (pg, ig) = net.backward(&x, &g).unwrap();
        // layout: w00 w01 w02 w10 w11 w12 b0 b1
        let expect_w = [
            g[0] * x[0],
            g[0] * x[1],
            g[0] * x[2],
            g[1] * x[0],
            g[1] * x[1],
            g[1] * x[2],
        ];
        for (got, want) in pg[..6].iter().zip(expect_w.iter()) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((pg[6] - g[0]).abs() < 1e-15);
        assert!((pg[7] - g[1]).abs() < 1e-15);
        // input grad = W^T g
        for i in 0..3 {
            let want = net.weights[0][i] * g[0] + net.weights[0][3 + i] * g[1];
            assert!((ig[i] - want).abs() < 1e-15);
        }
    }

    fn objective(net: &Mlp, x: &[f64], g: &[f64]) -> f64 {
        net.forward(x)
            .unwrap()
            .iter()
            .zip(g.iter())
            .map(|(o, gi)| o * gi)
            .sum()
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let step = 1e-5;
        for case in 0..100u64 {
            let out_act = if case % 3 == 0 {
                OutputActivation::Tanh
            } else {
                OutputActivation::Identity
            };
            let net = Mlp::init(&[3, 6, 4, 2], Activation::Tanh, out_act, 100 + case);
            let x = random_vec(&mut rng, 3);
            let g = random_vec(&mut rng, 2);
            let (pg, ig) = net.backward(&x, &g).unwrap();

            let flat = net.flatten();
            for i in (0..flat.len()).step_by(7) {
                let mut plus = net.clone();
                let mut fp = flat.clone();
                fp[i] += step;
                plus.set_from_flat(&fp);
                let mut minus = net.clone();
                fp[i] -= 2.0 * step;
                minus.set_from_flat(&fp);
                let fd = (objective(&plus, &x, &g) - objective(&minus, &x, &g)) / (2.0 * step);
                let denom = fd.abs().max(pg[i].abs()).max(1e-6);
                assert!(
                    (fd - pg[i]).abs() / denom < 1e-4,
                    "param grad {i}: analytic {} vs fd {fd}",
                    pg[i]
                );
            }
            for i in 0..x.len() {
                let mut xp = x.clone();
                xp[i] += step;
                let mut xm = x.clone();
                xm[i] -= step;
                let fd = (objective(&net, &xp, &g) - objective(&net, &xm, &g)) / (2.0 * step);
                let denom = fd.abs().max(ig[i].abs()).max(1e-6);
                assert!((fd - ig[i]).abs() / denom < 1e-4);
            }
        }
    }

    #[test]
    fn adam_zero_grad_keeps_params() {
        let mut opt = Adam::new(3, 1e-3);
        let mut p = vec![1.0, -2.0, 0.5];
        opt.step(&mut p, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(opt.step_count, 1);
    }

    #[test]
    fn adam_first_step_matches_closed_form() {
        let lr = 1e-3;
        let mut opt = Adam::new(2, lr);
        let mut p = vec![0.0, 0.0];
        let g = [0.3, -2.0];
        opt.step(&mut p, &g).unwrap();
        // First step from zero moments: m_hat = g, v_hat = g^2, so
        // update = -lr * g / (|g| + eps).
        for i in 0..2 {
            let want = -lr * g[i] / (g[i].abs() + 1e-8);
            assert!((p[i] - want).abs() < 1e-15, "{} vs {want}", p[i]);
        }
    }

    #[test]
    fn adam_two_steps_match_hand_unroll() {
        let lr = 0.01;
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let g = 0.7;
        let mut opt = Adam::new(1, lr);
        let mut p = vec![0.5];
        opt.step(&mut p, &[g]).unwrap();
        opt.step(&mut p, &[g]).unwrap();

        // hand unroll
        let mut hp = 0.5;
        let mut m = 0.0;
        let mut v = 0.0;
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1_pow(b1, t));
            let vh = v / (1.0 - b1_pow(b2, t));
            hp -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((p[0] - hp).abs() < 1e-12, "{} vs {hp}", p[0]);
    }

    fn b1_pow(b: f64, t: u32) -> f64 {
        b.powi(t as i32)
    }

    #[test]
    fn adam_rejects_non_finite_grad() {
        let mut opt = Adam::new(1, 1e-3);
        let mut p = vec![0.0];
        assert!(opt.step(&mut p, &[f64::NAN]).is_err());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = Mlp::init(&[4, 8, 2], Activation::Tanh, OutputActivation::Identity, 42);
        let b = Mlp::init(&[4, 8, 2], Activation::Tanh, OutputActivation::Identity, 42);
        let c = Mlp::init(&[4, 8, 2], Activation::Tanh, OutputActivation::Identity, 43);
        assert_eq!(a.flatten(), b.flatten());
        assert_ne!(a.flatten(), c.flatten());
    }

    #[test]
    fn init_weight_std_tracks_fan_in() {
        // fan_in = 64; collect 10k weight samples across seeds.
        let mut samples = Vec::new();
        let mut seed = 0;
        while samples.len() < 10_000 {
            let net = Mlp::init(&[64, 4, 1], Activation::Tanh, OutputActivation::Identity, seed);
            samples.extend_from_slice(&net.weights[0]);
            seed += 1;
        }
        let n = samples.len() as f64;
        let mean: f64 = samples.iter().sum::<f64>() / n;
        let var: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        let target = 1.0 / 8.0; // 1/sqrt(64)
        assert!(
            (std - target).abs() / target < 0.2,
            "std {std} vs target {target}"
        );
    }

    #[test]
    fn flatten_roundtrip() {
        let net = Mlp::init(&[3, 5, 2], Activation::Tanh, OutputActivation::Tanh, 9);
        let mut other = Mlp::init(&[3, 5, 2], Activation::Tanh, OutputActivation::Tanh, 10);
        other.set_from_flat(&net.flatten());
        assert_eq!(net.flatten(), other.flatten());
        assert_eq!(net.param_count(), net.flatten().len());
    }
}
