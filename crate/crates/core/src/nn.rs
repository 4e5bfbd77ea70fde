//! Minimal fully-connected networks: ReLU hidden layers, linear outputs,
//! plain SGD. Everything the dynamics models, Q-networks, and behavior
//! cloners need, and nothing more.

use ndarray::{Array1, Array2, Axis};
use rand::rngs::StdRng;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    /// [out, in]
    w: Array2<f64>,
    b: Array1<f64>,
}

impl Linear {
    fn new(in_dim: usize, out_dim: usize, rng: &mut StdRng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = Array2::from_shape_fn((out_dim, in_dim), |_| rng.random_range(-bound..bound));
        Self { w, b: Array1::zeros(out_dim) }
    }

    /// x: [batch, in] -> [batch, out]
    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    /// `dims` = [input, hidden..., output].
    pub fn new(dims: &[usize], rng: &mut StdRng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let layers = dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect();
        Self { layers }
    }

    /// A network that ignores its input and returns `out` (zero weights,
    /// fixed bias). Used to build ensembles with known predictions in tests.
    pub fn constant(in_dim: usize, out: &[f64]) -> Self {
        let mut layer = Linear {
            w: Array2::zeros((out.len(), in_dim)),
            b: Array1::from(out.to_vec()),
        };
        layer.b.assign(&Array1::from(out.to_vec()));
        Self { layers: vec![layer] }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut a = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            a.mapv_inplace(|v| v.max(0.0));
            a = layer.forward(&a);
        }
        a
    }

    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        let input = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        self.forward(&input).row(0).to_vec()
    }

    /// One SGD step given dL/d(output). Returns nothing; gradients are not
    /// retained. `x` must be the same batch the gradient was computed for.
    pub fn sgd_step(&mut self, x: &Array2<f64>, grad_out: &Array2<f64>, lr: f64) {
        // forward pass, keeping post-activation values per layer
        let mut activations: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        activations.push(x.clone());
        let mut a = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            let post = a.mapv(|v| v.max(0.0));
            activations.push(post.clone());
            a = layer.forward(&post);
        }

        // backward pass
        let mut delta = grad_out.clone();
        for (idx, layer) in self.layers.iter_mut().enumerate().rev() {
            let input = &activations[idx];
            let grad_w = delta.t().dot(input);
            let grad_b = delta.sum_axis(Axis(0));
            if idx > 0 {
                let mut back = delta.dot(&layer.w);
                // ReLU gate: the stored activation is already rectified
                back.zip_mut_with(input, |g, &v| {
                    if v <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = back;
            }
            layer.w.scaled_add(-lr, &grad_w);
            layer.b.scaled_add(-lr, &grad_b);
        }
    }

    /// One mean-squared-error SGD step; returns the batch loss.
    pub fn train_mse(&mut self, x: &Array2<f64>, target: &Array2<f64>, lr: f64) -> f64 {
        let pred = self.forward(x);
        let diff = &pred - target;
        let count = diff.len() as f64;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
        let grad = diff.mapv(|d| 2.0 * d / count);
        self.sgd_step(x, &grad, lr);
        loss
    }

    /// One cross-entropy SGD step on integer class targets; returns the
    /// batch loss.
    pub fn train_cross_entropy(&mut self, x: &Array2<f64>, classes: &[usize], lr: f64) -> f64 {
        let logits = self.forward(x);
        let batch = x.nrows() as f64;
        let mut grad = Array2::zeros(logits.raw_dim());
        let mut loss = 0.0;
        for (row, &class) in classes.iter().enumerate() {
            let probs = softmax(&logits.row(row).to_vec());
            loss -= probs[class].max(1e-300).ln();
            for (col, &p) in probs.iter().enumerate() {
                let t = if col == class { 1.0 } else { 0.0 };
                grad[[row, col]] = (p - t) / batch;
            }
        }
        self.sgd_step(x, &grad, lr);
        loss / batch
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value among legal actions. Ties keep the lowest
/// index; NaN values never win, so a NaN-filled head still yields a legal
/// action.
pub fn argmax_legal(values: &[f64], legal_mask: &[bool]) -> usize {
    let mut best: Option<usize> = None;
    for (i, (&v, &m)) in values.iter().zip(legal_mask).enumerate() {
        if !m {
            continue;
        }
        match best {
            None => best = Some(i),
            Some(b) => {
                if v > values[b] || (values[b].is_nan() && !v.is_nan()) {
                    best = Some(i);
                }
            }
        }
    }
    best.expect("no legal actions")
}
