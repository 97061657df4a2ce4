//! L2-regularized logistic regression trained by full-batch gradient descent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    /// L2 penalty on the weights (the bias is not penalized).
    pub l2: f64,
    pub max_epochs: usize,
    /// Training stops when the loss changes by less than this.
    pub tolerance: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            l2: 1e-3,
            max_epochs: 3000,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub epochs: usize,
    pub final_loss: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn margin(x: &FeatureVector, w: &[f64], b: f64) -> f64 {
    b + x.entries.iter().map(|&(i, c)| w[i as usize] * c as f64).sum::<f64>()
}

impl LogisticModel {
    pub fn score(&self, x: &FeatureVector) -> f64 {
        sigmoid(margin(x, &self.weights, self.bias))
    }
}

/// Mean log-loss plus `l2/2 * |w|^2`, with its gradient `(dw, db)`.
pub fn loss_and_gradient(xs: &[FeatureVector], ys: &[bool], w: &[f64], b: f64, l2: f64) -> (f64, Vec<f64>, f64) {
    let n = xs.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = margin(x, w, b);
        // -log p(y|z) = softplus(z) - y*z
        loss += softplus(z) - if y { z } else { 0.0 };
        let r = sigmoid(z) - if y { 1.0 } else { 0.0 };
        for &(i, c) in &x.entries {
            gw[i as usize] += r * c as f64;
        }
        gb += r;
    }
    loss /= n;
    gb /= n;
    let mut reg = 0.0;
    for (g, &wi) in gw.iter_mut().zip(w) {
        *g = *g / n + l2 * wi;
        reg += wi * wi;
    }
    (loss + 0.5 * l2 * reg, gw, gb)
}

/// Largest eigenvalue of `[X 1]^T [X 1] / n` by power iteration.
fn gram_top_eigenvalue(xs: &[FeatureVector], dim: usize, seed: u64) -> f64 {
    let n = xs.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..=dim).map(|_| rng.gen_range(0.5..1.0)).collect();
    let mut lambda = 0.0;
    for _ in 0..100 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let mut out = vec![0.0; dim + 1];
        for x in xs {
            let xv = v[dim] + x.entries.iter().map(|&(i, c)| v[i as usize] * c as f64).sum::<f64>();
            for &(i, c) in &x.entries {
                out[i as usize] += xv * c as f64;
            }
            out[dim] += xv;
        }
        out.iter_mut().for_each(|x| *x /= n);
        let next: f64 = out.iter().zip(&v).map(|(a, b)| a * b).sum();
        v = out;
        if (next - lambda).abs() <= 1e-9 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

/// Gradient descent with step `1/L`, where `L` bounds the gradient's
/// Lipschitz constant. Inputs are assumed validated by the caller.
pub fn train(xs: &[FeatureVector], ys: &[bool], dim: usize, params: &LogisticParams, seed: u64) -> LogisticModel {
    let lipschitz = 1.1 * gram_top_eigenvalue(xs, dim, seed) / 4.0 + params.l2;
    let step = 1.0 / lipschitz.max(1e-12);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let (mut loss, mut gw, mut gb) = loss_and_gradient(xs, ys, &w, b, params.l2);
    let mut epochs = 0;
    while epochs < params.max_epochs {
        for (wi, gi) in w.iter_mut().zip(&gw) {
            *wi -= step * gi;
        }
        b -= step * gb;
        epochs += 1;
        let (next, ngw, ngb) = loss_and_gradient(xs, ys, &w, b, params.l2);
        let delta = (loss - next).abs();
        loss = next;
        gw = ngw;
        gb = ngb;
        if delta < params.tolerance {
            break;
        }
    }
    LogisticModel {
        weights: w,
        bias: b,
        epochs,
        final_loss: loss,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(-800.0) >= 0.0);
        assert!((softplus(-800.0)).abs() < 1e-300 && (softplus(800.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let xs = vec![
            FeatureVector { dim: 2, entries: vec![(0, 1)] },
            FeatureVector { dim: 2, entries: vec![(1, 1)] },
        ];
        let ys = vec![true, false];
        let m = train(&xs, &ys, 2, &LogisticParams::default(), 1);
        assert!(m.final_loss < 2f64.ln());
        assert!(m.score(&xs[0]) > 0.5 && m.score(&xs[1]) < 0.5);
    }
}
