//! Multinomial logistic regression over sparse features.
//!
//! The training objective is
//! `sum_i CE(softmax(W x_i + b), y_i) + ||W||^2 / (2C) + BIAS_L2 * ||b||^2 / 2`
//! minimized with limited-memory BFGS and a backtracking line search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::sparse::SparseVector;

/// Small ridge on the bias keeps it finite for classes without examples.
pub const BIAS_L2: f64 = 1e-4;

const LBFGS_MEMORY: usize = 10;
const GRAD_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Inverse regularization strength.
    pub c: f64,
    /// Stop once the objective decreases by less than this fraction.
    pub eps_l: f64,
    pub max_iter: usize,
    pub bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            eps_l: 1e-6,
            max_iter: 500,
            bias: true,
        }
    }
}

/// `n_out` weight vectors over `dim` features, row-major, plus optional bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    n_out: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Option<Vec<f64>>,
}

impl LinearModel {
    pub fn new(
        n_out: usize,
        dim: usize,
        weights: Vec<f64>,
        bias: Option<Vec<f64>>,
    ) -> Result<Self> {
        if weights.len() != n_out * dim {
            return Err(Error::DimensionMismatch {
                expected: n_out * dim,
                got: weights.len(),
            });
        }
        if let Some(b) = &bias {
            if b.len() != n_out {
                return Err(Error::DimensionMismatch {
                    expected: n_out,
                    got: b.len(),
                });
            }
        }
        if weights
            .iter()
            .chain(bias.iter().flatten())
            .any(|w| !w.is_finite())
        {
            return Err(Error::InvalidParams("non-finite weight".into()));
        }
        Ok(LinearModel {
            n_out,
            dim,
            weights,
            bias,
        })
    }

    pub fn zeros(n_out: usize, dim: usize, with_bias: bool) -> Self {
        LinearModel {
            n_out,
            dim,
            weights: vec![0.0; n_out * dim],
            bias: with_bias.then(|| vec![0.0; n_out]),
        }
    }

    /// Zero weights, output fixed by the bias alone.
    pub fn constant(bias: Vec<f64>, dim: usize) -> Self {
        LinearModel {
            n_out: bias.len(),
            dim,
            weights: vec![0.0; bias.len() * dim],
            bias: Some(bias),
        }
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_row(&self, c: usize) -> &[f64] {
        &self.weights[c * self.dim..(c + 1) * self.dim]
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn bias_of(&self, c: usize) -> f64 {
        self.bias.as_ref().map_or(0.0, |b| b[c])
    }

    pub fn check_input(&self, x: &SparseVector) -> Result<()> {
        if x.min_dim() > self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.min_dim(),
            });
        }
        Ok(())
    }

    /// `w_c . x + b_c` without the dimension check.
    #[inline]
    pub fn score(&self, c: usize, x: &SparseVector) -> f64 {
        x.dot_dense(self.weight_row(c)) + self.bias_of(c)
    }

    /// Raw scores for every output, unnormalized.
    pub fn predict_scores(&self, x: &SparseVector) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok((0..self.n_out).map(|c| self.score(c, x)).collect())
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Result<Vec<f64>> {
        let mut scores = self.predict_scores(x)?;
        softmax_in_place(&mut scores);
        Ok(scores)
    }

    pub fn nonzero_weights(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        if let Some(b) = &self.bias {
            p.extend_from_slice(b);
        }
        p
    }

    fn from_params(n_out: usize, dim: usize, params: Vec<f64>, with_bias: bool) -> Self {
        let mut weights = params;
        let bias = with_bias.then(|| weights.split_off(n_out * dim));
        LinearModel {
            n_out,
            dim,
            weights,
            bias,
        }
    }
}

pub fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
}

/// Regularized objective and its gradient with respect to the flat parameter
/// vector `[W row-major, b]`.
pub fn objective(
    examples: &[(&SparseVector, usize)],
    n_out: usize,
    dim: usize,
    params: &[f64],
    c: f64,
    with_bias: bool,
) -> (f64, Vec<f64>) {
    let n_w = n_out * dim;
    let n_params = n_w + if with_bias { n_out } else { 0 };
    debug_assert_eq!(params.len(), n_params);
    let (weights, bias) = params.split_at(n_w);

    let partials: Vec<(f64, Vec<f64>)> = examples
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; n_params];
            let mut scores = vec![0.0; n_out];
            for &(x, y) in chunk {
                for (k, s) in scores.iter_mut().enumerate() {
                    *s = x.dot_dense(&weights[k * dim..(k + 1) * dim])
                        + if with_bias { bias[k] } else { 0.0 };
                }
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = scores.iter().map(|s| (s - max).exp()).sum();
                loss += max + total.ln() - scores[y];
                for k in 0..n_out {
                    let diff = (scores[k] - max).exp() / total - if k == y { 1.0 } else { 0.0 };
                    if diff == 0.0 {
                        continue;
                    }
                    let row = &mut grad[k * dim..(k + 1) * dim];
                    for &(j, v) in x.pairs() {
                        row[j] += diff * v;
                    }
                    if with_bias {
                        grad[n_w + k] += diff;
                    }
                }
            }
            (loss, grad)
        })
        .collect();

    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let inv_c = 1.0 / c;
    for (g, w) in grad[..n_w].iter_mut().zip(weights) {
        loss += 0.5 * inv_c * w * w;
        *g += inv_c * w;
    }
    for (g, b) in grad[n_w..].iter_mut().zip(bias) {
        loss += 0.5 * BIAS_L2 * b * b;
        *g += BIAS_L2 * b;
    }
    (loss, grad)
}

/// Trains a softmax model over `n_out` outputs on borrowed examples.
pub fn train_softmax(
    examples: &[(&SparseVector, usize)],
    n_out: usize,
    dim: usize,
    config: &TrainConfig,
) -> Result<LinearModel> {
    if !(config.c.is_finite() && config.c > 0.0) {
        return Err(Error::InvalidParams(format!(
            "C must be positive, got {}",
            config.c
        )));
    }
    if let Some(&(_, y)) = examples.iter().find(|(_, y)| *y >= n_out) {
        return Err(Error::InvalidParams(format!("label {y} >= {n_out}")));
    }
    let init = LinearModel::zeros(n_out, dim, config.bias).params();
    let eval = |p: &[f64]| objective(examples, n_out, dim, p, config.c, config.bias);
    let params = lbfgs(eval, init, config.eps_l, config.max_iter);
    Ok(LinearModel::from_params(n_out, dim, params, config.bias))
}

/// Flat multinomial model over all classes of `data`.
pub fn train_flat(data: &Dataset, config: &TrainConfig) -> Result<LinearModel> {
    let k = data.num_classes();
    if k < 2 {
        return Err(Error::InvalidParams(format!(
            "need at least 2 classes, got {k}"
        )));
    }
    let empty: Vec<usize> = data
        .class_counts()
        .iter()
        .enumerate()
        .filter(|(_, &n)| n == 0)
        .map(|(c, _)| c)
        .collect();
    if !empty.is_empty() {
        log::warn!(
            "{} classes have no training examples (first: {}); they only receive a bias",
            empty.len(),
            empty[0]
        );
    }
    let examples: Vec<(&SparseVector, usize)> =
        data.examples().iter().map(|(x, y)| (x, *y)).collect();
    train_softmax(&examples, k, data.dim(), config)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn lbfgs<F>(eval: F, mut x: Vec<f64>, eps: f64, max_iter: usize) -> Vec<f64>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (mut f, mut g) = eval(&x);
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new(); // (s, y, 1/(y.s))
    for iter in 0..max_iter {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= 1e-10 {
            break;
        }
        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.last() {
            let gamma = dot(s, y) / dot(y, y);
            for di in d.iter_mut() {
                *di *= gamma;
            }
        } else {
            let scale = 1.0 / gnorm;
            for di in d.iter_mut() {
                *di *= scale;
            }
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            history.clear();
            d = g.iter().map(|v| -v / gnorm).collect();
            slope = -gnorm;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = eval(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let ys = dot(&y, &s);
        if ys > 1e-12 {
            if history.len() == LBFGS_MEMORY {
                history.remove(0);
            }
            history.push((s, y, 1.0 / ys));
        }
        let decrease = (f - f_new) / f.abs().max(1.0);
        x = x_new;
        f = f_new;
        g = g_new;
        if iter > 0 && decrease < eps {
            break;
        }
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneStats {
    pub nonzero_before: usize,
    pub nonzero_after: usize,
}

impl PruneStats {
    /// Fraction of weights that are zero after pruning.
    pub fn sparsity(&self, total: usize) -> f64 {
        if total == 0 {
            1.0
        } else {
            1.0 - self.nonzero_after as f64 / total as f64
        }
    }
}

/// Zeroes every weight (bias included) with magnitude below `eta`.
pub fn prune_weights(model: &LinearModel, eta: f64) -> (LinearModel, PruneStats) {
    let before = model.nonzero_weights();
    let clip = |w: &f64| if w.abs() < eta { 0.0 } else { *w };
    let pruned = LinearModel {
        n_out: model.n_out,
        dim: model.dim,
        weights: model.weights.iter().map(clip).collect(),
        bias: model.bias.as_ref().map(|b| b.iter().map(clip).collect()),
    };
    let stats = PruneStats {
        nonzero_before: before,
        nonzero_after: pruned.nonzero_weights(),
    };
    (pruned, stats)
}
