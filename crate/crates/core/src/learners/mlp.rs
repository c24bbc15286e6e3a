use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::replay::TransitionRecord;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const MLP_SCHEMA_VERSION: u32 = 1;

/// Fully connected ReLU network with a linear head. Parameters are stored
/// flat, layer by layer, as a row-major weight matrix followed by biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub schema_version: u32,
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

fn count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Inventory scaled to [0, 1] followed by a one-hot of the same state.
pub fn encode_state(s: usize, n_states: usize) -> Vec<f64> {
    let mut v = vec![0.0; n_states + 1];
    v[0] = if n_states > 1 { s as f64 / (n_states - 1) as f64 } else { 0.0 };
    v[1 + s] = 1.0;
    v
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        Mlp { schema_version: MLP_SCHEMA_VERSION, sizes: sizes.to_vec(), params: vec![0.0; count(sizes)] }
    }

    /// He-uniform weights, zero biases.
    pub fn init(sizes: &[usize], rng: &mut Rng) -> Self {
        let mut m = Self::zeros(sizes);
        let mut off = 0;
        for w in sizes.windows(2) {
            let lim = (6.0 / w[0] as f64).sqrt();
            for p in &mut m.params[off..off + w[0] * w[1]] {
                *p = rng.gen_range(-lim..lim);
            }
            off += w[0] * w[1] + w[1];
        }
        m
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.schema_version != MLP_SCHEMA_VERSION {
            return Err(Error::Invalid(format!("unsupported network schema {}", self.schema_version)));
        }
        if self.sizes.len() < 2 || self.params.len() != count(&self.sizes) {
            return Err(Error::Dimension("parameter count does not match layer sizes".into()));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("non-finite network weights".into()));
        }
        Ok(())
    }

    /// Post-activation values of every layer, input first.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        let last = self.sizes.len() - 2;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let (wm, b) = self.params[off..off + n_in * n_out + n_out].split_at(n_in * n_out);
            let prev = &acts[l];
            let mut out = b.to_vec();
            for (o, row) in out.iter_mut().zip(wm.chunks(n_in)) {
                *o += row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
                if l < last {
                    *o = o.max(0.0);
                }
            }
            acts.push(out);
            off += n_in * n_out + n_out;
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check()?;
        if x.len() != self.sizes[0] {
            return Err(Error::Dimension(format!("input has {} entries, expected {}", x.len(), self.sizes[0])));
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.activations(x).pop().expect("output layer")
    }

    /// Adds `coeff * d out[k] / d params` into `grad`.
    fn backprop(&self, acts: &[Vec<f64>], k: usize, coeff: f64, grad: &mut [f64]) {
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = vec![0.0; self.sizes[n_layers]];
        delta[k] = coeff;
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let prev = &acts[l];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, a) in row.iter_mut().zip(prev) {
                    *g += d * a;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let wm = &self.params[off..off + n_in * n_out];
            let mut next = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (nx, w) in next.iter_mut().zip(&wm[o * n_in..(o + 1) * n_in]) {
                    *nx += d * w;
                }
            }
            // ReLU derivative of the previous hidden layer.
            for (nx, a) in next.iter_mut().zip(prev) {
                if *a <= 0.0 {
                    *nx = 0.0;
                }
            }
            delta = next;
        }
    }

    /// Mean of `(out[k] - y)^2` over `(input, k, y)` triples and its gradient.
    pub fn loss_and_grad(&self, batch: &[(Vec<f64>, usize, f64)]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let n = batch.len() as f64;
        for (x, k, y) in batch {
            let acts = self.activations(x);
            let err = acts[acts.len() - 1][*k] - y;
            loss += err * err / n;
            self.backprop(&acts, *k, 2.0 * err / n, &mut grad);
        }
        (loss, grad)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Mlp = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        m.check()?;
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// One Adam step on the mean squared TD error of `batch`. Rewards are
/// multiplied by `reward_scale` before forming targets.
pub fn dqn_train_step(
    online: &mut Mlp,
    target: &Mlp,
    batch: &[TransitionRecord],
    gamma: f64,
    adam: &mut Adam,
    n_states: usize,
    reward_scale: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty training batch".into()));
    }
    online.check()?;
    let triples: Vec<(Vec<f64>, usize, f64)> = batch
        .iter()
        .map(|r| {
            let boot = if r.terminal {
                0.0
            } else {
                let q = target.forward_unchecked(&encode_state(r.s_next, n_states));
                q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            (encode_state(r.s, n_states), r.a, reward_scale * r.reward_target + gamma * boot)
        })
        .collect();
    let (loss, grad) = online.loss_and_grad(&triples);
    adam.step(&mut online.params, &grad);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::Provenance;
    use crate::rng::stream;

    #[test]
    fn reference_architecture_size() {
        let m = Mlp::zeros(&[28, 128, 128, 13]);
        assert_eq!(m.n_params(), 21_901);
        assert_eq!(m.forward(&encode_state(3, 27)).unwrap(), vec![0.0; 13]);
    }

    #[test]
    fn forward_is_pure_and_rejects_nan() {
        let mut rng = stream(0, 0);
        let mut m = Mlp::init(&[5, 8, 3], &mut rng);
        let x = encode_state(2, 4);
        assert_eq!(m.forward(&x).unwrap(), m.forward(&x).unwrap());
        m.params[3] = f64::NAN;
        assert!(m.forward(&x).is_err());
        assert!(m.forward(&[0.0; 2]).is_err());
    }

    fn fd_check(sizes: &[usize], seed: u64) {
        let mut rng = stream(seed, 0);
        let mut m = Mlp::init(sizes, &mut rng);
        // Nonzero biases keep pre-activations off the ReLU kink.
        for p in &mut m.params {
            *p += rng.gen_range(-0.3..0.3);
        }
        let batch: Vec<(Vec<f64>, usize, f64)> = (0..5)
            .map(|_| {
                let x: Vec<f64> = (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (x, rng.gen_range(0..sizes[sizes.len() - 1]), rng.gen_range(-1.0..1.0))
            })
            .collect();
        let (_, g) = m.loss_and_grad(&batch);
        let h = 1e-6;
        for i in 0..m.n_params() {
            let mut p = m.clone();
            p.params[i] += h;
            let up = p.loss_and_grad(&batch).0;
            p.params[i] -= 2.0 * h;
            let down = p.loss_and_grad(&batch).0;
            let fd = (up - down) / (2.0 * h);
            let scale = g[i].abs().max(fd.abs()).max(1e-6);
            assert!((g[i] - fd).abs() <= 1e-3 * scale, "param {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        fd_check(&[3, 4, 4, 2], 1);
        fd_check(&[4, 4, 3], 2);
    }

    #[test]
    fn zero_learning_rate_is_noop() {
        let mut rng = stream(3, 0);
        let mut m = Mlp::init(&[5, 8, 2], &mut rng);
        let t = m.clone();
        let before = m.clone();
        let mut adam = Adam::new(m.n_params(), 0.0);
        let rec = TransitionRecord {
            s: 1,
            a: 1,
            reward_target: 2.0,
            s_next: 2,
            provenance: Provenance::Matured,
            epoch: 0,
            terminal: false,
            forced: false,
            available_at: 0,
        };
        dqn_train_step(&mut m, &t, &[rec], 0.9, &mut adam, 4, 1.0).unwrap();
        assert_eq!(m, before);
        assert!(dqn_train_step(&mut m, &t, &[], 0.9, &mut adam, 4, 1.0).is_err());
    }

    #[test]
    fn regresses_single_transition() {
        let mut rng = stream(4, 0);
        let mut m = Mlp::init(&[28, 128, 128, 13], &mut rng);
        let t = m.clone();
        let mut adam = Adam::new(m.n_params(), 0.001);
        let rec = TransitionRecord {
            s: 20,
            a: 7,
            reward_target: 0.5,
            s_next: 19,
            provenance: Provenance::Matured,
            epoch: 0,
            terminal: false,
            forced: false,
            available_at: 0,
        };
        let batch = vec![rec; 32];
        for _ in 0..10_000 {
            dqn_train_step(&mut m, &t, &batch, 0.0, &mut adam, 27, 1.0).unwrap();
        }
        let q = m.forward(&encode_state(20, 27)).unwrap();
        assert!((q[7] - 0.5).abs() <= 0.01, "{}", q[7]);
    }
}
