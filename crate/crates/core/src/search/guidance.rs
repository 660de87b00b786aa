//! Critic and policy networks: two affine layers of width 16 each, trained
//! by plain SGD on samples harvested from finished searches.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use thiserror::Error;

pub const FEATURE_DIM: usize = 16;
pub const HIDDEN: usize = 16;
/// Candidate slots the policy scores.
pub const SLOTS: usize = 16;

const MAGIC: &[u8; 4] = b"ATGG";
const VERSION: u32 = 1;

pub type Features = [f64; FEATURE_DIM];

/// Goal-text tokens hashed into 16 buckets, scaled to unit norm.
pub fn features(goals: &[String]) -> Features {
    let mut v = [0.0; FEATURE_DIM];
    for tok in goals.iter().flat_map(|g| g.split_whitespace()) {
        let mut h = DefaultHasher::new();
        tok.hash(&mut h);
        v[(h.finish() % FEATURE_DIM as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// `out = W2 · tanh(W1 · x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    out: usize,
}

impl Mlp {
    fn new(out: usize, rng: &mut dyn RngCore) -> Self {
        let bound = 1.0 / (FEATURE_DIM as f64).sqrt();
        Self {
            w1: (0..HIDDEN * FEATURE_DIM).map(|_| rng.random_range(-bound..bound)).collect(),
            b1: vec![0.0; HIDDEN],
            w2: vec![0.0; out * HIDDEN],
            b2: vec![0.0; out],
            out,
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count(), "parameter vector length");
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    fn forward(&self, x: &Features) -> (Vec<f64>, Vec<f64>) {
        let hidden: Vec<f64> = (0..HIDDEN)
            .map(|i| {
                let row = &self.w1[i * FEATURE_DIM..(i + 1) * FEATURE_DIM];
                (row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.b1[i]).tanh()
            })
            .collect();
        let out = (0..self.out)
            .map(|o| {
                let row = &self.w2[o * HIDDEN..(o + 1) * HIDDEN];
                row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + self.b2[o]
            })
            .collect();
        (hidden, out)
    }

    /// Parameter gradient given the loss gradient at the output.
    fn backward(&self, x: &Features, hidden: &[f64], dout: &[f64]) -> Vec<f64> {
        let mut gw2 = vec![0.0; self.w2.len()];
        let mut dh = [0.0; HIDDEN];
        for o in 0..self.out {
            for i in 0..HIDDEN {
                gw2[o * HIDDEN + i] = dout[o] * hidden[i];
                dh[i] += dout[o] * self.w2[o * HIDDEN + i];
            }
        }
        let mut gw1 = vec![0.0; self.w1.len()];
        let mut gb1 = vec![0.0; HIDDEN];
        for i in 0..HIDDEN {
            let dz = dh[i] * (1.0 - hidden[i] * hidden[i]);
            gb1[i] = dz;
            for j in 0..FEATURE_DIM {
                gw1[i * FEATURE_DIM + j] = dz * x[j];
            }
        }
        [gw1, gb1, gw2, dout.to_vec()].concat()
    }

    fn step(&mut self, grad: &[f64], lr: f64) {
        let p: Vec<f64> = self.params().iter().zip(grad).map(|(p, g)| p - lr * g).collect();
        self.set_params(&p);
    }
}

/// One training example: a state's features, its outcome value and, for
/// states on a proof, the candidate slot that was taken out of `n_slots`.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceSample {
    pub features: Features,
    pub value: f64,
    pub chosen: Option<(usize, usize)>,
}

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("guidance file: {0}")]
    Io(#[from] std::io::Error),
    #[error("guidance file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceModel {
    pub critic: Mlp,
    pub policy: Mlp,
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

impl GuidanceModel {
    /// Random first layers, zero output layers: an untrained critic says 0
    /// and an untrained policy is uniform.
    pub fn new(rng: &mut dyn RngCore) -> Self {
        Self {
            critic: Mlp::new(1, rng),
            policy: Mlp::new(SLOTS, rng),
        }
    }

    pub fn critic_value(&self, x: &Features) -> f64 {
        self.critic.forward(x).1[0].tanh()
    }

    pub fn policy_logits(&self, x: &Features) -> Vec<f64> {
        self.policy.forward(x).1
    }

    /// Probabilities over the first `n` slots (slots past the model width
    /// get zero mass).
    pub fn policy_priors(&self, x: &Features, n: usize) -> Vec<f64> {
        let logits = self.policy_logits(x);
        let k = n.min(SLOTS);
        let mut out = softmax(&logits[..k]);
        out.resize(n, 0.0);
        out
    }

    pub fn guidance_value(&self, goals: &[String]) -> f64 {
        self.critic_value(&features(goals))
    }

    pub fn guidance_priors(&self, goals: &[String], n: usize) -> Vec<f64> {
        self.policy_priors(&features(goals), n)
    }

    /// `½ (tanh(out) − target)²`.
    pub fn critic_loss(&self, s: &GuidanceSample) -> f64 {
        0.5 * (self.critic_value(&s.features) - s.value).powi(2)
    }

    pub fn critic_grad(&self, s: &GuidanceSample) -> Vec<f64> {
        let (hidden, out) = self.critic.forward(&s.features);
        let v = out[0].tanh();
        let dout = (v - s.value) * (1.0 - v * v);
        self.critic.backward(&s.features, &hidden, &[dout])
    }

    /// Cross-entropy of the chosen slot under a softmax over the first
    /// `n_slots` logits; zero for samples without a choice.
    pub fn policy_loss(&self, s: &GuidanceSample) -> f64 {
        let Some((chosen, n)) = Self::choice(s) else {
            return 0.0;
        };
        let logits = self.policy_logits(&s.features);
        -softmax(&logits[..n])[chosen].ln()
    }

    pub fn policy_grad(&self, s: &GuidanceSample) -> Vec<f64> {
        let Some((chosen, n)) = Self::choice(s) else {
            return vec![0.0; self.policy.param_count()];
        };
        let (hidden, logits) = self.policy.forward(&s.features);
        let p = softmax(&logits[..n]);
        let mut dout = vec![0.0; SLOTS];
        for j in 0..n {
            dout[j] = p[j] - if j == chosen { 1.0 } else { 0.0 };
        }
        self.policy.backward(&s.features, &hidden, &dout)
    }

    fn choice(s: &GuidanceSample) -> Option<(usize, usize)> {
        s.chosen.filter(|&(c, n)| c < n.min(SLOTS)).map(|(c, n)| (c, n.min(SLOTS)))
    }

    /// One epoch of per-sample SGD in a shuffled order.
    pub fn train(&mut self, samples: &[GuidanceSample], lr: f64, rng: &mut dyn RngCore) {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(rng);
        for i in order {
            let s = &samples[i];
            let g = self.critic_grad(s);
            self.critic.step(&g, lr);
            if Self::choice(s).is_some() {
                let g = self.policy_grad(s);
                self.policy.step(&g, lr);
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for n in [VERSION, FEATURE_DIM as u32, HIDDEN as u32, SLOTS as u32] {
            out.extend_from_slice(&n.to_le_bytes());
        }
        for p in self.critic.params().into_iter().chain(self.policy.params()) {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GuidanceError> {
        let bad = |m: &str| GuidanceError::Format(m.to_string());
        if bytes.len() < 20 || &bytes[..4] != MAGIC {
            return Err(bad("missing header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
        if word(0) != VERSION {
            return Err(GuidanceError::Format(format!("unsupported version {}", word(0))));
        }
        if (word(1), word(2), word(3)) != (FEATURE_DIM as u32, HIDDEN as u32, SLOTS as u32) {
            return Err(bad("shape mismatch"));
        }
        let body = &bytes[20..];
        let mut model = Self::new(&mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0));
        let (nc, np) = (model.critic.param_count(), model.policy.param_count());
        if body.len() != 8 * (nc + np) {
            return Err(bad("truncated parameters"));
        }
        let params: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        model.critic.set_params(&params[..nc]);
        model.policy.set_params(&params[nc..]);
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), GuidanceError> {
        crate::record::write_atomic(path, &self.to_bytes()).map_err(|e| GuidanceError::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, GuidanceError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn untrained_critic_is_zero_at_origin() {
        let m = GuidanceModel::new(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(m.critic_value(&[0.0; FEATURE_DIM]), 0.0);
        let p = m.policy_priors(&[0.0; FEATURE_DIM], 4);
        assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-12));
    }

    #[test]
    fn features_are_unit_norm() {
        let f = features(&["x : ℕ\n⊢ x + 0 = x".to_string()]);
        assert!((f.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(features(&[]), [0.0; FEATURE_DIM]);
    }

    #[test]
    fn regression_toward_positive_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = GuidanceModel::new(&mut rng);
        let samples: Vec<_> = (0..50)
            .map(|i| {
                let goal = format!("⊢ x + {} = x", i % 5);
                GuidanceSample {
                    features: features(&[goal]),
                    value: 1.0,
                    chosen: Some((0, 4)),
                }
            })
            .collect();
        for _ in 0..10 {
            m.train(&samples, 1e-2, &mut rng);
        }
        assert!(samples.iter().all(|s| m.critic_value(&s.features) > 0.0));
        assert!(m.policy_priors(&samples[0].features, 4)[0] > 0.25);
    }

    #[test]
    fn binary_round_trip() {
        let m = GuidanceModel::new(&mut ChaCha8Rng::seed_from_u64(3));
        let bytes = m.to_bytes();
        assert_eq!(GuidanceModel::from_bytes(&bytes).unwrap(), m);
        assert!(GuidanceModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[4] = 9;
        assert!(GuidanceModel::from_bytes(&wrong).is_err());
    }
}
