//! Two-hidden-layer softplus perceptron `R^d -> R` used as the adversary.
//!
//! Flat weight layout: `W1 (64 x d) | b1 | W2 (64 x 64) | b2 | w3 | b3`, with
//! matrices row-major.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::tape::{Tape, Var};

pub const HIDDEN: usize = 64;

/// Name of the hidden activation, echoed into checkpoints.
pub const ACTIVATION: &str = "softplus";

pub fn weight_count(d: usize) -> usize {
    (d + 1) * HIDDEN + (HIDDEN + 1) * HIDDEN + HIDDEN + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    d: usize,
    pub weights: Vec<f64>,
}

struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
}

fn offsets(d: usize) -> Offsets {
    let w1 = 0;
    let b1 = w1 + HIDDEN * d;
    let w2 = b1 + HIDDEN;
    let b2 = w2 + HIDDEN * HIDDEN;
    let w3 = b2 + HIDDEN;
    let b3 = w3 + HIDDEN;
    Offsets { w1, b1, w2, b2, w3, b3 }
}

impl Discriminator {
    pub fn zeros(d: usize) -> Self {
        Self {
            d,
            weights: vec![0.0; weight_count(d)],
        }
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` for every weight and bias.
    pub fn random(d: usize, rng: &mut ChaCha8Rng) -> Self {
        let o = offsets(d);
        let mut weights = Vec::with_capacity(weight_count(d));
        let mut fill = |count: usize, fan_in: usize| {
            let b = 1.0 / math::sqrt(fan_in as f64);
            for _ in 0..count {
                weights.push(rng.random_range(-b..b));
            }
        };
        fill(o.w2 - o.w1, d);
        fill(o.w3 - o.w2, HIDDEN);
        fill(HIDDEN + 1, HIDDEN);
        Self { d, weights }
    }

    pub fn from_weights(d: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != weight_count(d) {
            return Err(Error::Length {
                expected: weight_count(d),
                got: weights.len(),
            });
        }
        Ok(Self { d, weights })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    fn hidden(&self, x: &[f64]) -> ([f64; HIDDEN], [f64; HIDDEN]) {
        let (d, w, o) = (self.d, &self.weights, offsets(self.d));
        let mut h1 = [0.0; HIDDEN];
        for (r, h) in h1.iter_mut().enumerate() {
            *h = math::dot(&w[o.w1 + r * d..o.w1 + (r + 1) * d], x) + w[o.b1 + r];
        }
        let a1 = h1.map(math::softplus);
        let mut h2 = [0.0; HIDDEN];
        for (r, h) in h2.iter_mut().enumerate() {
            *h = math::dot(&w[o.w2 + r * HIDDEN..o.w2 + (r + 1) * HIDDEN], &a1) + w[o.b2 + r];
        }
        (h1, h2)
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let o = offsets(self.d);
        let (_, h2) = self.hidden(x);
        let a2 = h2.map(math::softplus);
        math::dot(&self.weights[o.w3..o.b3], &a2) + self.weights[o.b3]
    }

    /// Closed-form `grad_x D(x) = W1^T (s(h1) * W2^T (s(h2) * w3))`.
    pub fn input_grad(&self, x: &[f64]) -> Vec<f64> {
        let (d, w, o) = (self.d, &self.weights, offsets(self.d));
        let (h1, h2) = self.hidden(x);
        let g2: Vec<f64> = (0..HIDDEN).map(|r| math::sigmoid(h2[r]) * w[o.w3 + r]).collect();
        let mut g1 = [0.0; HIDDEN];
        for (r, &gr) in g2.iter().enumerate() {
            for c in 0..HIDDEN {
                g1[c] += w[o.w2 + r * HIDDEN + c] * gr;
            }
        }
        let mut out = vec![0.0; d];
        for r in 0..HIDDEN {
            let gr = g1[r] * math::sigmoid(h1[r]);
            for c in 0..d {
                out[c] += w[o.w1 + r * d + c] * gr;
            }
        }
        out
    }

    /// Records `D(x)` with weights taken from the node `w`.
    pub fn record(&self, tape: &mut Tape, w: Var, x: Var) -> Var {
        record(tape, self.d, w, x)
    }
}

/// Records `D(x)` for input dimension `d` with weights from node `w`.
pub fn record(tape: &mut Tape, d: usize, w: Var, x: Var) -> Var {
    let o = offsets(d);
    let w1 = tape.slice(w, o.w1, HIDDEN * d);
    let b1 = tape.slice(w, o.b1, HIDDEN);
    let w2 = tape.slice(w, o.w2, HIDDEN * HIDDEN);
    let b2 = tape.slice(w, o.b2, HIDDEN);
    let w3 = tape.slice(w, o.w3, HIDDEN);
    let b3 = tape.index(w, o.b3);
    let z1 = tape.matvec(w1, x, HIDDEN, d);
    let h1 = tape.add(z1, b1);
    let a1 = tape.softplus(h1);
    let z2 = tape.matvec(w2, a1, HIDDEN, HIDDEN);
    let h2 = tape.add(z2, b2);
    let a2 = tape.softplus(h2);
    let y = tape.dot(w3, a2);
    tape.add(y, b3)
}
