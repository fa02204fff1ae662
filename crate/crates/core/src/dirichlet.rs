//! Dirichlet pseudo-count machinery: conjugate updates, sampling, predictive
//! means and maximum-likelihood fitting by Minka's fixed-point iteration.

use rand::Rng;
use rand_distr::{Distribution as _, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::bayes_net::Distribution;
use crate::error::{Error, Result};

/// Probabilities are clamped to this floor before taking logs.
pub const LOG_FLOOR: f64 = 1e-10;

/// Positive pseudo-counts over labelled categories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirichletParams {
    alphas: Vec<f64>,
    labels: Vec<String>,
}

impl DirichletParams {
    pub fn new(alphas: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Distribution("dirichlet needs at least one category".into()));
        }
        if alphas.len() != labels.len() {
            return Err(Error::Distribution(format!(
                "{} alphas for {} labels",
                alphas.len(),
                labels.len()
            )));
        }
        if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::Distribution(format!("alpha {a} is not positive")));
        }
        Ok(Self { alphas, labels })
    }

    /// Categories labelled by their index.
    pub fn from_alphas(alphas: Vec<f64>) -> Result<Self> {
        let labels = (0..alphas.len()).map(|i| i.to_string()).collect();
        Self::new(alphas, labels)
    }

    pub fn symmetric(alpha: f64, labels: Vec<String>) -> Result<Self> {
        Self::new(vec![alpha; labels.len()], labels)
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.alphas.iter().sum()
    }

    /// Predictive mean α_i / Σα.
    pub fn mean(&self) -> Distribution {
        Distribution::new(self.labels.clone(), self.mean_probs())
            .expect("positive alphas always give a valid mean")
    }

    pub fn mean_probs(&self) -> Vec<f64> {
        let total = self.total();
        self.alphas.iter().map(|a| a / total).collect()
    }

    pub fn update_counts(&self, category: &str, weight: f64) -> Result<Self> {
        let idx = self
            .labels
            .iter()
            .position(|l| l == category)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "category",
                label: category.to_string(),
            })?;
        self.update_index(idx, weight)
    }

    pub fn update_index(&self, idx: usize, weight: f64) -> Result<Self> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::Distribution(format!("count weight {weight} is negative")));
        }
        if idx >= self.alphas.len() {
            return Err(Error::UnknownLabel {
                kind: "category",
                label: idx.to_string(),
            });
        }
        let mut next = self.clone();
        next.alphas[idx] += weight;
        Ok(next)
    }

    pub(crate) fn set_alpha(&mut self, idx: usize, alpha: f64) {
        self.alphas[idx] = alpha;
    }

    pub(crate) fn with_alphas(&self, alphas: Vec<f64>) -> Result<Self> {
        Self::new(alphas, self.labels.clone())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Distribution {
        let mut probs = vec![0.0; self.alphas.len()];
        self.sample_into(rng, &mut probs);
        Distribution::new(self.labels.clone(), probs).expect("normalized draw")
    }

    /// Writes one normalized draw into `out` via independent Gamma variates.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let mut total = 0.0;
        for (o, &a) in out.iter_mut().zip(&self.alphas) {
            let g = Gamma::new(a, 1.0).expect("positive shape");
            *o = g.sample(rng);
            total += *o;
        }
        if total > 0.0 && total.is_finite() {
            out.iter_mut().for_each(|o| *o /= total);
            // Renormalize once more so the sum is 1 to rounding.
            let s: f64 = out.iter().sum();
            out.iter_mut().for_each(|o| *o /= s);
        } else {
            // Every variate underflowed: all mass goes to the largest alpha.
            let best = argmax(&self.alphas);
            out.iter_mut().enumerate().for_each(|(i, o)| *o = if i == best { 1.0 } else { 0.0 });
        }
    }

    /// Weighted maximum-likelihood fit to probability vectors.
    pub fn fit(samples: &[Distribution], weights: &[f64]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Fit("no samples".into()))?;
        let rows: Vec<&[f64]> = samples.iter().map(|s| s.probs()).collect();
        let alphas = fit_weighted(&rows, Some(weights), &FitOptions::default())?.alphas;
        Self::new(alphas, first.support().to_vec())
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 1000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub alphas: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Sufficient statistics of a weighted sample of probability vectors.
#[derive(Clone, Debug)]
pub struct FitStats {
    /// Weighted mean of ln p_k (after clamping).
    pub mean_log: Vec<f64>,
    /// Weighted mean of p_k.
    pub mean: Vec<f64>,
    /// Weighted mean of p_k².
    pub mean_sq: Vec<f64>,
}

impl FitStats {
    pub fn from_samples(samples: &[&[f64]], weights: Option<&[f64]>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Fit("at least two samples are required".into()));
        }
        let dim = samples[0].len();
        if dim < 2 {
            return Err(Error::Fit("need at least two categories".into()));
        }
        if let Some(w) = weights {
            if w.len() != samples.len() {
                return Err(Error::Fit(format!("{} weights for {} samples", w.len(), samples.len())));
            }
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::Fit("weights must be nonnegative".into()));
            }
        }
        let mut mean_log = vec![0.0; dim];
        let mut mean = vec![0.0; dim];
        let mut mean_sq = vec![0.0; dim];
        let mut interior = vec![false; dim];
        let mut total = 0.0;
        for (i, row) in samples.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Fit("samples have different dimensions".into()));
            }
            let w = weights.map_or(1.0, |w| w[i]);
            if w == 0.0 {
                continue;
            }
            total += w;
            for k in 0..dim {
                let p = row[k];
                if p > 0.0 && p < 1.0 {
                    interior[k] = true;
                }
                mean_log[k] += w * p.max(LOG_FLOOR).ln();
                mean[k] += w * p;
                mean_sq[k] += w * p * p;
            }
        }
        if total <= 0.0 {
            return Err(Error::Fit("weights are all zero".into()));
        }
        if let Some(k) = interior.iter().position(|x| !x) {
            return Err(Error::Fit(format!(
                "component {k} is 0 or 1 in every sample; smooth the data before fitting"
            )));
        }
        for k in 0..dim {
            mean_log[k] /= total;
            mean[k] /= total;
            mean_sq[k] /= total;
        }
        Ok(Self {
            mean_log,
            mean,
            mean_sq,
        })
    }

    /// Moment-matching starting point for the fixed-point iteration.
    pub fn moment_init(&self) -> Vec<f64> {
        let dim = self.mean.len();
        let mut precision_sum = 0.0;
        let mut used = 0usize;
        for k in 0..dim {
            let var = self.mean_sq[k] - self.mean[k] * self.mean[k];
            if var > 0.0 && self.mean[k] > 0.0 {
                let s = (self.mean[k] - self.mean_sq[k]) / var;
                if s.is_finite() && s > 0.0 {
                    precision_sum += s.ln();
                    used += 1;
                }
            }
        }
        let precision = if used > 0 {
            (precision_sum / used as f64).exp().min(1e12)
        } else {
            1e12
        };
        self.mean
            .iter()
            .map(|m| (precision * m).max(1e-6))
            .collect()
    }
}

/// Inverse of the digamma function (Newton iteration with Minka's start).
pub fn inverse_digamma(y: f64) -> f64 {
    let mut x = if y >= -2.22 {
        y.exp() + 0.5
    } else {
        -1.0 / (y - digamma(1.0))
    };
    for _ in 0..6 {
        x -= (digamma(x) - y) / trigamma(x);
    }
    x
}

/// Second derivative of ln Γ.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    // Asymptotic series in 1/x.
    acc + 1.0 / x
        + x2 / 2.0
        + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

/// MLE from sufficient statistics, starting at `init`. Newton steps on
/// the diagonal-plus-rank-one Hessian, with a fixed-point step whenever
/// Newton would leave the positive orthant.
pub fn fit_from_stats(mean_log: &[f64], init: &[f64], opts: &FitOptions) -> Result<FitResult> {
    if mean_log.len() != init.len() || init.is_empty() {
        return Err(Error::Fit("dimension mismatch".into()));
    }
    let mut alphas = init.to_vec();
    let mut next = vec![0.0; alphas.len()];
    for iteration in 1..=opts.max_iterations {
        let total: f64 = alphas.iter().sum();
        let psi_total = digamma(total);
        let z = trigamma(total);
        let mut num = 0.0;
        let mut den = 1.0 / z;
        for (k, &a) in alphas.iter().enumerate() {
            let g = psi_total - digamma(a) + mean_log[k];
            let q = -trigamma(a);
            next[k] = g;
            num += g / q;
            den += 1.0 / q;
        }
        let b = num / den;
        let mut newton_ok = true;
        for (k, &a) in alphas.iter().enumerate() {
            let step = (next[k] - b) / -trigamma(a);
            next[k] = a - step;
            newton_ok &= next[k] > 0.0 && next[k].is_finite();
        }
        if !newton_ok {
            for (n, ml) in next.iter_mut().zip(mean_log) {
                *n = inverse_digamma(psi_total + ml).max(1e-12);
            }
        }
        let delta = alphas
            .iter()
            .zip(&next)
            .map(|(a, n)| (a - n).abs())
            .fold(0.0, f64::max);
        alphas.copy_from_slice(&next);
        if !alphas.iter().all(|a| a.is_finite()) {
            return Err(Error::Fit("iteration diverged".into()));
        }
        if delta < opts.tolerance {
            return Ok(FitResult {
                alphas,
                iterations: iteration,
                converged: true,
            });
        }
    }
    Ok(FitResult {
        alphas,
        iterations: opts.max_iterations,
        converged: false,
    })
}

/// Moment-matching initialization followed by the fixed-point iteration.
pub fn fit_weighted(samples: &[&[f64]], weights: Option<&[f64]>, opts: &FitOptions) -> Result<FitResult> {
    let stats = FitStats::from_samples(samples, weights)?;
    fit_from_stats(&stats.mean_log, &stats.moment_init(), opts)
}
