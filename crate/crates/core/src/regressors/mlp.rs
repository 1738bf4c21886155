use super::{Activation, MlpParams, RegressorError, Result};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Logistic => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation value `a = f(z)`.
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Logistic => a * (1.0 - a),
        }
    }
}

/// One hidden layer, linear output: `w2 · f(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub n_inputs: usize,
    pub hidden: usize,
    pub activation: Activation,
    /// Row-major `hidden × n_inputs`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpModel {
    /// Glorot-uniform weights from `seed`, zero biases.
    pub fn init(n_inputs: usize, hidden: usize, activation: Activation, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let a1 = (6.0 / (n_inputs + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + 1) as f64).sqrt();
        Self {
            n_inputs,
            hidden,
            activation,
            w1: (0..hidden * n_inputs).map(|_| rng.uniform_in(-a1, a1)).collect(),
            b1: vec![0.0; hidden],
            w2: (0..hidden).map(|_| rng.uniform_in(-a2, a2)).collect(),
            b2: 0.0,
        }
    }

    fn hidden_layer(&self, x: &[f64], out: &mut [f64]) {
        for (j, h) in out.iter_mut().enumerate() {
            let row = &self.w1[j * self.n_inputs..(j + 1) * self.n_inputs];
            let z = self.b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            *h = self.activation.apply(z);
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden];
        self.hidden_layer(x, &mut h);
        self.b2 + self.w2.iter().zip(&h).map(|(w, a)| w * a).sum::<f64>()
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// Parameters flattened as `w1, b1, w2, b2`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        let (w1, rest) = p.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.b1.len());
        let (w2, rest) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2 = rest[0];
    }

    pub fn loss(&self, x: &[Vec<f64>], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(r, t)| (self.predict(r) - t).powi(2)).sum::<f64>() / y.len() as f64
    }

    /// Mean squared error and its gradient in [`params`](Self::params) order.
    pub fn loss_and_gradient(&self, x: &[Vec<f64>], y: &[f64]) -> (f64, Vec<f64>) {
        let n = y.len() as f64;
        let (ni, nh) = (self.n_inputs, self.hidden);
        let mut grad = vec![0.0; self.n_params()];
        let (gw1, rest) = grad.split_at_mut(nh * ni);
        let (gb1, rest) = rest.split_at_mut(nh);
        let (gw2, gb2) = rest.split_at_mut(nh);
        let mut h = vec![0.0; nh];
        let mut loss = 0.0;
        for (r, t) in x.iter().zip(y) {
            self.hidden_layer(r, &mut h);
            let out = self.b2 + self.w2.iter().zip(&h).map(|(w, a)| w * a).sum::<f64>();
            let err = out - t;
            loss += err * err;
            let d_out = 2.0 * err / n;
            gb2[0] += d_out;
            for j in 0..nh {
                gw2[j] += d_out * h[j];
                let d_z = d_out * self.w2[j] * self.activation.slope(h[j]);
                gb1[j] += d_z;
                for (g, v) in gw1[j * ni..(j + 1) * ni].iter_mut().zip(r) {
                    *g += d_z * v;
                }
            }
        }
        (loss / n, grad)
    }

    /// Full-batch gradient descent. Returns the model and its final training MSE.
    pub fn fit(params: &MlpParams, x: &[Vec<f64>], y: &[f64]) -> Result<(Self, f64)> {
        let mut model = Self::init(x[0].len(), params.hidden, params.activation, params.seed);
        let mut p = model.params();
        for _ in 0..params.epochs {
            let (loss, g) = model.loss_and_gradient(x, y);
            if !loss.is_finite() {
                return Err(RegressorError::Diverged {
                    step_size: params.step_size,
                });
            }
            for (w, d) in p.iter_mut().zip(&g) {
                *w -= params.step_size * d;
            }
            model.set_params(&p);
        }
        let loss = model.loss(x, y);
        if !loss.is_finite() {
            return Err(RegressorError::Diverged {
                step_size: params.step_size,
            });
        }
        Ok((model, loss))
    }
}
