//! A one-hidden-layer tanh perceptron with hand-written backprop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `out = W2 · tanh(W1 · x + b1) + b2`. Weights are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Mlp {
    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        Self {
            inputs,
            hidden,
            outputs,
            w1: vec![0.0; hidden * inputs],
            b1: vec![0.0; hidden],
            w2: vec![0.0; outputs * hidden],
            b2: vec![0.0; outputs],
        }
    }

    /// Uniform fan-in initialization; the output layer is scaled by
    /// `out_scale` and biased by `out_bias`.
    pub fn init(inputs: usize, hidden: usize, out_bias: &[f64], out_scale: f64, rng: &mut impl Rng) -> Self {
        let outputs = out_bias.len();
        let mut m = Self::zeros(inputs, hidden, outputs);
        let a1 = (3.0 / inputs as f64).sqrt();
        m.w1.iter_mut().for_each(|w| *w = rng.gen_range(-a1..a1));
        let a2 = out_scale * (3.0 / hidden as f64).sqrt();
        m.w2.iter_mut().for_each(|w| *w = rng.gen_range(-a2..a2));
        m.b2.copy_from_slice(out_bias);
        m
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = self.w1.len() == self.hidden * self.inputs
            && self.b1.len() == self.hidden
            && self.w2.len() == self.outputs * self.hidden
            && self.b2.len() == self.outputs;
        if !shapes || self.inputs == 0 || self.hidden == 0 || self.outputs == 0 {
            return Err(Error::ConfigError("perceptron parameter shapes do not match dims".into()));
        }
        if !self.params().all(f64::is_finite) {
            return Err(Error::ConfigError("perceptron has non-finite parameters".into()));
        }
        Ok(())
    }

    fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).copied()
    }

    /// Output and hidden activations.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(x.len(), self.inputs);
        let h: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.inputs..(j + 1) * self.inputs];
                (self.b1[j] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()).tanh()
            })
            .collect();
        let out = (0..self.outputs)
            .map(|k| {
                let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
                self.b2[k] + row.iter().zip(&h).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        (out, h)
    }

    /// Parameter gradient for upstream gradient `d_out`, given the input and
    /// the hidden activations from [`Mlp::forward`].
    pub fn backward(&self, x: &[f64], h: &[f64], d_out: &[f64]) -> Mlp {
        let mut g = Mlp::zeros(self.inputs, self.hidden, self.outputs);
        let mut d_h = vec![0.0; self.hidden];
        for k in 0..self.outputs {
            g.b2[k] = d_out[k];
            for j in 0..self.hidden {
                g.w2[k * self.hidden + j] = d_out[k] * h[j];
                d_h[j] += d_out[k] * self.w2[k * self.hidden + j];
            }
        }
        for j in 0..self.hidden {
            let d_pre = d_h[j] * (1.0 - h[j] * h[j]);
            g.b1[j] = d_pre;
            if d_pre != 0.0 {
                for (gw, xi) in g.w1[j * self.inputs..(j + 1) * self.inputs].iter_mut().zip(x) {
                    *gw = d_pre * xi;
                }
            }
        }
        g
    }

    pub fn norm(&self) -> f64 {
        self.params().map(|p| p * p).sum::<f64>().sqrt()
    }

    /// `self −= lr · grad`, with `grad` rescaled to norm at most `clip`.
    pub fn step(&mut self, grad: &Mlp, lr: f64, clip: f64) {
        let norm = grad.norm();
        let scale = if norm > clip { lr * clip / norm } else { lr };
        let pairs = [
            (&mut self.w1, &grad.w1),
            (&mut self.b1, &grad.b1),
            (&mut self.w2, &grad.w2),
            (&mut self.b2, &grad.b2),
        ];
        for (p, g) in pairs {
            p.iter_mut().zip(g).for_each(|(p, g)| *p -= scale * g);
        }
    }
}
