//! One-hidden-layer ReLU network (four units) with a Gaussian likelihood.
//!
//! The whole network is trained, but only the output layer `θ = (w, b)` is
//! monitored: scores are gradients of the per-observation penalized
//! log-likelihood with respect to `θ`, with the hidden layer held fixed.
//!
//! Training runs full-batch gradient descent (heavy-ball momentum, fixed step)
//! on `MSE + (γ/n)(‖W1‖² + ‖b1‖² + ‖w‖² + b²)`, with hand-coded gradients.
//! The output layer is then re-solved exactly against the monitored
//! penalized likelihood so that the training scores average to zero.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DriftError, Result};
use crate::linmodel::solve_spd;
use crate::rng::{substream, Domain};

pub const HIDDEN: usize = 4;

/// Dimension of the monitored parameter vector `(w, b)`.
pub const SCORE_DIM: usize = HIDDEN + 1;

const SIGMA2_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Gradient norm above which the fit is flagged as not converged.
    pub grad_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 3000, step_size: 0.05, momentum: 0.9, seed: 0, grad_tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedMlp {
    /// Hidden weights, row-major `HIDDEN × p`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w: Vec<f64>,
    pub b: f64,
    pub gamma: f64,
    pub sigma2: f64,
    pub n_train: usize,
    /// False when gradient descent stopped above `grad_tol`.
    pub converged: bool,
    pub final_grad_norm: f64,
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

impl FittedMlp {
    pub fn n_features(&self) -> usize {
        self.w1.len() / HIDDEN
    }

    /// Hidden activations `relu(W1 x + b1)`.
    pub fn hidden(&self, x: &[f64]) -> [f64; HIDDEN] {
        hidden(&self.w1, &self.b1, x)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let a = self.hidden(x);
        self.b + a.iter().zip(&self.w).map(|(a, w)| a * w).sum::<f64>()
    }

    /// `((y − g(x)) / σ²) [a; 1] − (γ / n) [w; b]`.
    pub fn score(&self, x: &[f64], y: f64) -> Vec<f64> {
        let mut out = vec![0.0; SCORE_DIM];
        self.score_into(x, y, &mut out);
        out
    }

    pub fn score_into(&self, x: &[f64], y: f64, out: &mut [f64]) {
        let a = self.hidden(x);
        let g = self.b + a.iter().zip(&self.w).map(|(a, w)| a * w).sum::<f64>();
        let scaled = (y - g) / self.sigma2;
        let pen = self.gamma / self.n_train as f64;
        for k in 0..HIDDEN {
            out[k] = scaled * a[k] - pen * self.w[k];
        }
        out[HIDDEN] = scaled - pen * self.b;
    }

    /// Per-observation penalized log-likelihood in `θ = (w, b)` (constant
    /// terms dropped), with the hidden layer fixed at its fitted values.
    pub fn penalized_loglik(&self, theta: &[f64], x: &[f64], y: f64) -> f64 {
        let a = self.hidden(x);
        let g = theta[HIDDEN] + a.iter().zip(theta).map(|(a, w)| a * w).sum::<f64>();
        let pen = self.gamma / (2.0 * self.n_train as f64);
        -(y - g).powi(2) / (2.0 * self.sigma2) - pen * theta.iter().map(|t| t * t).sum::<f64>()
    }

    pub fn theta(&self) -> Vec<f64> {
        let mut t = self.w.clone();
        t.push(self.b);
        t
    }
}

fn hidden(w1: &[f64], b1: &[f64], x: &[f64]) -> [f64; HIDDEN] {
    let p = x.len();
    let mut a = [0.0; HIDDEN];
    for k in 0..HIDDEN {
        let row = &w1[k * p..(k + 1) * p];
        a[k] = relu(b1[k] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
    }
    a
}

/// Flat parameter vector: `[W1 (row-major), b1, w, b]`.
struct Params {
    p: usize,
    v: Vec<f64>,
}

impl Params {
    fn len(p: usize) -> usize {
        HIDDEN * p + HIDDEN + HIDDEN + 1
    }
    fn w1(&self) -> &[f64] {
        &self.v[..HIDDEN * self.p]
    }
    fn b1(&self) -> &[f64] {
        &self.v[HIDDEN * self.p..HIDDEN * (self.p + 1)]
    }
    fn w(&self) -> &[f64] {
        &self.v[HIDDEN * (self.p + 1)..HIDDEN * (self.p + 2)]
    }
    fn b(&self) -> f64 {
        self.v[HIDDEN * (self.p + 2)]
    }
}

/// Objective value and its gradient at `params`.
fn objective_grad(params: &Params, data: &Dataset, gamma: f64, grad: &mut [f64]) -> f64 {
    let p = params.p;
    let n = data.len() as f64;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let (w1, b1, w, b) = (params.w1(), params.b1(), params.w(), params.b());
    let (gw1, rest) = grad.split_at_mut(HIDDEN * p);
    let (gb1, rest) = rest.split_at_mut(HIDDEN);
    let (gw, gb) = rest.split_at_mut(HIDDEN);
    let mut sse = 0.0;
    for (x, y) in data.iter() {
        let mut pre = [0.0; HIDDEN];
        let mut out = b;
        for k in 0..HIDDEN {
            pre[k] = b1[k] + w1[k * p..(k + 1) * p].iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
            out += w[k] * relu(pre[k]);
        }
        let r = out - y;
        sse += r * r;
        gb[0] += r;
        for k in 0..HIDDEN {
            if pre[k] > 0.0 {
                gw[k] += r * pre[k];
                let back = r * w[k];
                gb1[k] += back;
                for (g, v) in gw1[k * p..(k + 1) * p].iter_mut().zip(x) {
                    *g += back * v;
                }
            }
        }
    }
    let norm2: f64 = params.v.iter().map(|t| t * t).sum();
    for (g, t) in grad.iter_mut().zip(&params.v) {
        *g = 2.0 * *g / n + 2.0 * gamma / n * t;
    }
    sse / n + gamma / n * norm2
}

fn init_params(p: usize, seed: u64) -> Params {
    let mut rng = substream(seed, Domain::Init, 0, 0);
    let mut v = Vec::with_capacity(Params::len(p));
    let hidden_bound = (6.0 / p as f64).sqrt();
    for _ in 0..HIDDEN * p {
        v.push(rng.random_range(-hidden_bound..hidden_bound));
    }
    v.extend(std::iter::repeat_n(0.1, HIDDEN));
    let out_bound = (6.0 / (HIDDEN + 1) as f64).sqrt();
    for _ in 0..HIDDEN {
        v.push(rng.random_range(-out_bound..out_bound));
    }
    v.push(0.0);
    Params { p, v }
}

/// Fit the network from a seeded random initialization.
pub fn fit_mlp(data: &Dataset, gamma: f64, cfg: &TrainConfig) -> Result<FittedMlp> {
    check_inputs(data, gamma, cfg)?;
    // Initialization is drawn for standardized inputs; the output bias
    // starts at the response mean.
    let mut params = init_params(data.n_features(), cfg.seed);
    let last = params.v.len() - 1;
    params.v[last] = data.responses().iter().sum::<f64>() / data.len() as f64;
    let u = std::mem::take(&mut params.v);
    params.v = vec![0.0; u.len()];
    Precond::new(data).to_original(&u, &mut params.v);
    train(data, gamma, cfg, params)
}

/// Fit the network starting from the parameters of `start`.
pub fn fit_mlp_from(data: &Dataset, gamma: f64, cfg: &TrainConfig, start: &FittedMlp) -> Result<FittedMlp> {
    check_inputs(data, gamma, cfg)?;
    let p = data.n_features();
    if start.n_features() != p {
        return Err(DriftError::Dimension { expected: p, got: start.n_features() });
    }
    let mut v = start.w1.clone();
    v.extend_from_slice(&start.b1);
    v.extend_from_slice(&start.w);
    v.push(start.b);
    train(data, gamma, cfg, Params { p, v })
}

fn check_inputs(data: &Dataset, gamma: f64, cfg: &TrainConfig) -> Result<()> {
    if data.is_empty() {
        return Err(DriftError::Input("cannot fit a network to an empty dataset".into()));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(DriftError::Input(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    if !(cfg.step_size > 0.0 && cfg.step_size.is_finite()) || !(0.0..1.0).contains(&cfg.momentum) {
        return Err(DriftError::Input("step_size must be > 0 and momentum in [0,1)".into()));
    }
    data.ensure_finite()
}

/// Per-feature centre and scale used to precondition the descent. The
/// objective is unchanged: iterates live in standardized coordinates and are
/// mapped back to the original weights before every gradient evaluation.
struct Precond {
    mu: Vec<f64>,
    s: Vec<f64>,
}

impl Precond {
    fn new(data: &Dataset) -> Self {
        let p = data.n_features();
        let n = data.len() as f64;
        let mut mu = vec![0.0; p];
        for (x, _) in data.iter() {
            for (m, v) in mu.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut s = vec![0.0; p];
        for (x, _) in data.iter() {
            for ((a, v), m) in s.iter_mut().zip(x).zip(&mu) {
                *a += (v - m) * (v - m) / n;
            }
        }
        for a in s.iter_mut() {
            *a = if *a > 0.0 { a.sqrt() } else { 1.0 };
        }
        Self { mu, s }
    }

    /// Standardized coordinates to original weights.
    fn to_original(&self, u: &[f64], out: &mut [f64]) {
        let p = self.mu.len();
        out.copy_from_slice(u);
        for k in 0..HIDDEN {
            let mut shift = 0.0;
            for j in 0..p {
                out[k * p + j] = u[k * p + j] / self.s[j];
                shift += out[k * p + j] * self.mu[j];
            }
            out[HIDDEN * p + k] = u[HIDDEN * p + k] - shift;
        }
    }

    fn to_standardized(&self, v: &[f64]) -> Vec<f64> {
        let p = self.mu.len();
        let mut u = v.to_vec();
        for k in 0..HIDDEN {
            let mut shift = 0.0;
            for j in 0..p {
                u[k * p + j] = v[k * p + j] * self.s[j];
                shift += v[k * p + j] * self.mu[j];
            }
            u[HIDDEN * p + k] = v[HIDDEN * p + k] + shift;
        }
        u
    }

    /// Pull a gradient in original weights back to standardized coordinates.
    fn pull_back(&self, g: &mut [f64]) {
        let p = self.mu.len();
        for k in 0..HIDDEN {
            let gb = g[HIDDEN * p + k];
            for j in 0..p {
                g[k * p + j] = (g[k * p + j] - gb * self.mu[j]) / self.s[j];
            }
        }
    }
}

fn train(data: &Dataset, gamma: f64, cfg: &TrainConfig, mut params: Params) -> Result<FittedMlp> {
    let pre = Precond::new(data);
    let mut u = pre.to_standardized(&params.v);
    let mut grad = vec![0.0; params.v.len()];
    let mut velocity = vec![0.0; params.v.len()];
    for _ in 0..cfg.epochs {
        pre.to_original(&u, &mut params.v);
        objective_grad(&params, data, gamma, &mut grad);
        pre.pull_back(&mut grad);
        for ((t, v), g) in u.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
            *v = cfg.momentum * *v - cfg.step_size * g;
            *t += *v;
        }
    }
    pre.to_original(&u, &mut params.v);
    let loss = objective_grad(&params, data, gamma, &mut grad);
    if !loss.is_finite() || params.v.iter().any(|v| !v.is_finite()) {
        return Err(DriftError::DegenerateDesign("network training diverged; reduce step_size".into()));
    }
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let converged = grad_norm <= cfg.grad_tol;
    if !converged {
        warn!("network fit stopped with gradient norm {grad_norm:.3e} (tolerance {:.1e})", cfg.grad_tol);
    }

    let mut model = FittedMlp {
        w1: params.w1().to_vec(),
        b1: params.b1().to_vec(),
        w: params.w().to_vec(),
        b: params.b(),
        gamma,
        sigma2: 1.0,
        n_train: data.len(),
        converged,
        final_grad_norm: grad_norm,
    };
    polish_output_layer(&mut model, data)?;
    Ok(model)
}

/// Re-solve `(w, b)` with the hidden layer frozen so that the penalized
/// likelihood is exactly stationary: `(AᵀA + γσ²I) θ = Aᵀy`, iterating the
/// plug-in `σ²` (mean squared residual) to a fixed point.
fn polish_output_layer(model: &mut FittedMlp, data: &Dataset) -> Result<()> {
    let n = data.len();
    let mut gram = DMatrix::<f64>::zeros(SCORE_DIM, SCORE_DIM);
    let mut rhs = DVector::<f64>::zeros(SCORE_DIM);
    for (x, y) in data.iter() {
        let a = model.hidden(x);
        let at: [f64; SCORE_DIM] = [a[0], a[1], a[2], a[3], 1.0];
        for i in 0..SCORE_DIM {
            rhs[i] += at[i] * y;
            for j in 0..SCORE_DIM {
                gram[(i, j)] += at[i] * at[j];
            }
        }
    }
    let mse = |m: &FittedMlp| data.iter().map(|(x, y)| (y - m.predict(x)).powi(2)).sum::<f64>() / n as f64;

    let mut sigma2 = mse(model).max(SIGMA2_FLOOR);
    for _ in 0..50 {
        let mut a = gram.clone();
        for i in 0..SCORE_DIM {
            a[(i, i)] += model.gamma * sigma2;
        }
        let theta = match solve_spd(&a, &rhs) {
            Ok(t) => t,
            // Dead hidden units without a penalty leave the system singular;
            // take the minimum-norm solution.
            Err(_) => a
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|e| DriftError::DegenerateDesign(e.to_string()))?,
        };
        model.w = theta.iter().take(HIDDEN).copied().collect();
        model.b = theta[HIDDEN];
        model.sigma2 = sigma2;
        let next = mse(model).max(SIGMA2_FLOOR);
        if (next - sigma2).abs() <= 1e-12 * sigma2 {
            break;
        }
        sigma2 = next;
    }
    Ok(())
}

/// Mean of per-fold out-of-sample R² over `folds` shuffled folds.
pub fn cross_validated_r2(data: &Dataset, gamma: f64, cfg: &TrainConfig, folds: usize, seed: u64) -> Result<f64> {
    if folds < 2 || data.len() < folds {
        return Err(DriftError::Input(format!("cannot run {folds}-fold CV on {} rows", data.len())));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut substream(seed, Domain::Folds, 0, 0));
    let mut total = 0.0;
    for f in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) = idx.iter().enumerate().fold((vec![], vec![]), |mut acc, (k, &i)| {
            if k % folds == f {
                acc.0.push(i)
            } else {
                acc.1.push(i)
            }
            acc
        });
        let model = fit_mlp(&data.select(&train), gamma, cfg)?;
        let held = data.select(&test);
        let mean = held.responses().iter().sum::<f64>() / held.len() as f64;
        let ss_tot: f64 = held.responses().iter().map(|y| (y - mean).powi(2)).sum();
        let ss_res: f64 = held.iter().map(|(x, y)| (y - model.predict(x)).powi(2)).sum();
        total += 1.0 - ss_res / ss_tot;
    }
    Ok(total / folds as f64)
}
