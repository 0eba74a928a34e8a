use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sigmoid, Policy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticConfig {
    /// Ridge penalty `l2/2 * |w|^2` on the weights (the intercept is free).
    pub l2: f64,
    pub max_iterations: usize,
    /// Stop once the gradient norm falls to this value.
    pub tolerance: f64,
    /// Columns whose weight stays pinned at zero (e.g. sensitive attributes).
    pub frozen: Vec<bool>,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iterations: 10_000,
            tolerance: 1e-6,
            frozen: Vec::new(),
        }
    }
}

/// Mean negative log-likelihood plus ridge penalty. Parameters are laid out
/// as `[w_0, .., w_{d-1}, b]`.
pub struct LogisticObjective<'a> {
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    l2: f64,
    frozen: &'a [bool],
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl<'a> LogisticObjective<'a> {
    pub fn new(x: ArrayView2<'a, f64>, y: ArrayView1<'a, f64>, l2: f64, frozen: &'a [bool]) -> Self {
        Self { x, y, l2, frozen }
    }

    fn is_frozen(&self, k: usize) -> bool {
        self.frozen.get(k).copied().unwrap_or(false)
    }

    fn margins(&self, params: ArrayView1<'_, f64>) -> Array1<f64> {
        let d = self.x.ncols();
        let w = params.slice(ndarray::s![..d]);
        self.x.dot(&w) + params[d]
    }

    pub fn loss(&self, params: ArrayView1<'_, f64>) -> f64 {
        let d = self.x.ncols();
        let n = self.x.nrows() as f64;
        let z = self.margins(params);
        let nll: f64 = z
            .iter()
            .zip(self.y.iter())
            .map(|(z, y)| softplus(*z) - y * z)
            .sum::<f64>()
            / n;
        let ridge: f64 = (0..d)
            .filter(|&k| !self.is_frozen(k))
            .map(|k| params[k] * params[k])
            .sum();
        nll + 0.5 * self.l2 * ridge
    }

    pub fn gradient(&self, params: ArrayView1<'_, f64>) -> Array1<f64> {
        let d = self.x.ncols();
        let n = self.x.nrows() as f64;
        let z = self.margins(params);
        let residual: Array1<f64> = z
            .iter()
            .zip(self.y.iter())
            .map(|(z, y)| sigmoid(*z) - y)
            .collect();
        let mut grad = Array1::zeros(d + 1);
        let gw = self.x.t().dot(&residual) / n;
        for k in 0..d {
            grad[k] = if self.is_frozen(k) {
                0.0
            } else {
                gw[k] + self.l2 * params[k]
            };
        }
        grad[d] = residual.sum() / n;
        grad
    }
}

/// Fit a binary logistic policy with default settings and ridge `l2`.
pub fn train_logistic(x: ArrayView2<'_, f64>, y: &[bool], l2: f64, seed: u64) -> Result<Policy> {
    let config = LogisticConfig {
        l2,
        ..LogisticConfig::default()
    };
    train_logistic_with(x, y, &config, seed)
}

/// Full-batch gradient descent with Armijo backtracking. The trial step is
/// the Barzilai-Borwein step from the previous iterate. The seed only sets
/// the small random starting weights, so equal inputs give bit-identical fits.
pub fn train_logistic_with(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    config: &LogisticConfig,
    seed: u64,
) -> Result<Policy> {
    let (n, d) = x.dim();
    if n != y.len() {
        return Err(Error::input(
            "policy",
            format!("{n} feature rows but {} labels", y.len()),
        ));
    }
    if n < 2 {
        return Err(Error::input("policy", "need at least two training rows"));
    }
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == n {
        return Err(Error::input(
            "policy",
            "training labels contain a single class",
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("policy", "non-finite feature value"));
    }
    if !(config.l2 >= 0.0 && config.l2.is_finite()) {
        return Err(Error::input("policy", "l2 must be a nonnegative number"));
    }
    if !config.frozen.is_empty() && config.frozen.len() != d {
        return Err(Error::input("policy", "frozen mask length differs from feature count"));
    }

    let y_num: Array1<f64> = y.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let objective = LogisticObjective::new(x, y_num.view(), config.l2, &config.frozen);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Array1::<f64>::zeros(d + 1);
    for k in 0..d {
        if !objective.is_frozen(k) {
            params[k] = rng.random_range(-0.01..0.01);
        }
    }

    let mut loss = objective.loss(params.view());
    let mut grad = objective.gradient(params.view());
    let mut step = 1.0;
    let mut previous: Option<(Array1<f64>, Array1<f64>)> = None;

    for _ in 0..config.max_iterations {
        let gnorm = grad.dot(&grad).sqrt();
        if gnorm <= config.tolerance {
            return Ok(Policy::new(params.slice(ndarray::s![..d]).to_vec(), params[d]));
        }
        if let Some((prev_params, prev_grad)) = &previous {
            let s = &params - prev_params;
            let r = &grad - prev_grad;
            let sr = s.dot(&r);
            if sr > 0.0 {
                step = (s.dot(&s) / sr).clamp(1e-10, 1e10);
            }
        }
        let g2 = gnorm * gnorm;
        let mut accepted = None;
        while step > 1e-20 {
            let trial = &params - &(&grad * step);
            let trial_loss = objective.loss(trial.view());
            if trial_loss <= loss - 1e-4 * step * g2 {
                accepted = Some((trial, trial_loss));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_loss)) = accepted else {
            break;
        };
        previous = Some((params, grad));
        params = next;
        loss = next_loss;
        grad = objective.gradient(params.view());
    }

    let gnorm = grad.dot(&grad).sqrt();
    if gnorm <= config.tolerance {
        return Ok(Policy::new(params.slice(ndarray::s![..d]).to_vec(), params[d]));
    }
    Err(Error::numerical(
        "policy",
        format!(
            "logistic training stopped with gradient norm {gnorm:e} (tolerance {:e})",
            config.tolerance
        ),
    ))
}
