//! Fully connected rectifier network with a scalar output and hand-written
//! reverse mode, plus Adam.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths from input to output; the last entry is 1.
    widths: Vec<usize>,
    /// All weights and biases; layer `l` stores its `out×in` weights
    /// row-major followed by its `out` biases.
    params: Vec<f64>,
}

/// Activations kept from a forward pass, one vector per layer per input.
pub struct Tape {
    // activations[layer][input]: post-rectifier values (inputs for layer 0)
    activations: Vec<Vec<Vec<f64>>>,
}

impl Mlp {
    /// He-normal hidden weights, zero biases and a zero output layer, so a
    /// fresh network outputs 0 everywhere.
    pub fn new(input: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut params = Vec::new();
        let last = widths.len() - 2;
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            if l == last {
                params.extend(std::iter::repeat_n(0.0, fan_out * fan_in));
            } else {
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                params.extend((0..fan_out * fan_in).map(|_| normal.sample(rng)));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self { widths, params }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    fn offsets(&self) -> Vec<usize> {
        let mut out = vec![0];
        for l in 0..self.widths.len() - 1 {
            let size = self.widths[l + 1] * (self.widths[l] + 1);
            out.push(out[l] + size);
        }
        out
    }

    /// Scalar outputs for each input, with the tape for [`Mlp::backward`].
    pub fn forward(&self, inputs: &[Vec<f64>]) -> (Vec<f64>, Tape) {
        let offsets = self.offsets();
        let layers = self.widths.len() - 1;
        let mut activations = vec![inputs.to_vec()];
        for l in 0..layers {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[offsets[l]..offsets[l] + fan_out * fan_in];
            let b = &self.params[offsets[l] + fan_out * fan_in..offsets[l + 1]];
            let next: Vec<Vec<f64>> = activations[l]
                .iter()
                .map(|x| {
                    (0..fan_out)
                        .map(|j| {
                            let row = &w[j * fan_in..(j + 1) * fan_in];
                            let z = b[j] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
                            if l + 1 < layers {
                                z.max(0.0)
                            } else {
                                z
                            }
                        })
                        .collect()
                })
                .collect();
            activations.push(next);
        }
        let outputs = activations[layers].iter().map(|v| v[0]).collect();
        (outputs, Tape { activations })
    }

    /// Gradient of `Σ_s upstream[s] · output_s` with respect to the parameters.
    pub fn backward(&self, tape: &Tape, upstream: &[f64]) -> Vec<f64> {
        let offsets = self.offsets();
        let layers = self.widths.len() - 1;
        let mut grad = vec![0.0; self.params.len()];
        for (s, &u) in upstream.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            let mut delta = vec![u];
            for l in (0..layers).rev() {
                let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
                let x = &tape.activations[l][s];
                let w_off = offsets[l];
                let b_off = w_off + fan_out * fan_in;
                for j in 0..fan_out {
                    if delta[j] == 0.0 {
                        continue;
                    }
                    let row = &mut grad[w_off + j * fan_in..w_off + (j + 1) * fan_in];
                    for (g, xi) in row.iter_mut().zip(x) {
                        *g += delta[j] * xi;
                    }
                    grad[b_off + j] += delta[j];
                }
                if l == 0 {
                    break;
                }
                let w = &self.params[w_off..b_off];
                let mut prev = vec![0.0; fan_in];
                for j in 0..fan_out {
                    if delta[j] == 0.0 {
                        continue;
                    }
                    for (p, wk) in prev.iter_mut().zip(&w[j * fan_in..(j + 1) * fan_in]) {
                        *p += delta[j] * wk;
                    }
                }
                // rectifier derivative from the stored post-activation
                for (p, a) in prev.iter_mut().zip(x) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        grad
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(lr: f64, size: usize) -> Self {
        Self {
            lr,
            m: vec![0.0; size],
            v: vec![0.0; size],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn perturbed(seed: u64) -> (Mlp, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Mlp::new(5, &[7, 6], &mut rng);
        for p in net.params_mut() {
            *p += 0.3 * rng.random::<f64>() - 0.15;
        }
        let inputs = (0..4)
            .map(|_| (0..5).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        (net, inputs)
    }

    #[test]
    fn fresh_network_outputs_zero() {
        let net = Mlp::new(32, &[64, 64, 64], &mut ChaCha8Rng::seed_from_u64(1));
        let (out, _) = net.forward(&[vec![0.5; 32], vec![-1.0; 32]]);
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (mut net, inputs) = perturbed(4);
        let upstream = [0.7, -1.3, 0.2, 2.0];
        let (_, tape) = net.forward(&inputs);
        let grad = net.backward(&tape, &upstream);
        let value = |net: &Mlp| -> f64 {
            let (out, _) = net.forward(&inputs);
            out.iter().zip(&upstream).map(|(o, u)| o * u).sum()
        };
        let h = 1e-6;
        for i in (0..net.num_params()).step_by(7) {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = value(&net);
            net.params_mut()[i] = orig - h;
            let down = value(&net);
            net.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()),
                "param {i}: {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(0.1, 2);
        for _ in 0..500 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut x, &g);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2));
    }
}
