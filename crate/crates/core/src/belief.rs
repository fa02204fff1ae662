//! Belief tracking over `(i_u, c)` and Bayesian learning of the transition
//! parameters.
//!
//! The user act is integrated out after every turn:
//!
//! ```text
//! b'(i', c) ∝ Σ_u P(o | u) P(u | i', a_m, c) Σ_i P(i' | i, a_m, c) b(i, c)
//! ```
//!
//! Parameter posteriors are kept as independent Dirichlets. After each turn,
//! every parameter vector with enough conditioning mass is refitted to
//! likelihood-weighted draws from its current Dirichlet.

use rand::Rng;
use statrs::function::gamma::digamma;

use crate::bayes_net::{Distribution, Network, NetworkBuilder, NORMALIZATION_TOLERANCE};
use crate::dirichlet::{fit_from_stats, DirichletParams, FitOptions, LOG_FLOOR};
use crate::domain::{ModelSide, NBestList, Vocabulary};
use crate::error::{Error, Result};
use crate::transition::{Tables, TransitionModel};

/// Joint distribution over intention and context, indexed `c * n_i + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefState {
    ni: usize,
    nc: usize,
    probs: Vec<f64>,
}

impl BeliefState {
    pub fn uniform(vocab: &Vocabulary) -> Self {
        let (ni, nc) = (vocab.n_intentions(), vocab.n_contexts());
        Self {
            ni,
            nc,
            probs: vec![1.0 / (ni * nc) as f64; ni * nc],
        }
    }

    pub fn from_probs(vocab: &Vocabulary, probs: Vec<f64>) -> Result<Self> {
        let (ni, nc) = (vocab.n_intentions(), vocab.n_contexts());
        if probs.len() != ni * nc {
            return Err(Error::Distribution(format!(
                "belief has {} entries, expected {}",
                probs.len(),
                ni * nc
            )));
        }
        if probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::Distribution("belief has a negative or non-finite entry".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Distribution(format!("belief sums to {total}")));
        }
        Ok(Self { ni, nc, probs })
    }

    /// Point mass on one intention and context index.
    pub fn point(vocab: &Vocabulary, intention: usize, context: usize) -> Self {
        let mut b = Self::uniform(vocab);
        b.probs.iter_mut().for_each(|p| *p = 0.0);
        b.probs[context * b.ni + intention] = 1.0;
        b
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Same shape as `like`, trusting `probs` to be normalized.
    pub(crate) fn from_raw(like: &BeliefState, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), like.probs.len());
        Self { probs, ..*like }
    }

    pub fn get(&self, context: usize, intention: usize) -> f64 {
        self.probs[context * self.ni + intention]
    }

    pub fn intention_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.ni];
        for (k, p) in self.probs.iter().enumerate() {
            out[k % self.ni] += p;
        }
        out
    }

    pub fn context_marginal(&self) -> Vec<f64> {
        self.probs.chunks(self.ni).map(|row| row.iter().sum()).collect()
    }

    /// Conditions on a known context assignment.
    pub fn observe_context(&mut self, context: usize) -> Result<()> {
        let mass: f64 = self.probs[context * self.ni..(context + 1) * self.ni].iter().sum();
        if mass <= 0.0 {
            return Err(Error::ZeroProbabilityEvidence);
        }
        for (k, p) in self.probs.iter_mut().enumerate() {
            *p = if k / self.ni == context { *p / mass } else { 0.0 };
        }
        Ok(())
    }

    /// Mixture `λ·self + (1−λ)·other`.
    pub fn mix(&self, other: &BeliefState, lambda: f64) -> BeliefState {
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        Self { probs, ..*self }
    }

    /// Marginal over intentions as a labeled distribution.
    pub fn intention_distribution(&self, vocab: &Vocabulary) -> Result<Distribution> {
        Distribution::from_weights(vocab.intentions.clone(), self.intention_marginal())
    }

    /// Builder holding the context variables (chained) and `i_u`.
    pub(crate) fn network_builder(&self, vocab: &Vocabulary) -> Result<NetworkBuilder> {
        let mut b = NetworkBuilder::new();
        let cards: Vec<usize> = vocab.context_vars.iter().map(|v| v.values.len()).collect();
        // levels[k][prefix] = P(first k context variables = prefix)
        let mut levels = vec![self.context_marginal()];
        for &card in cards.iter().rev() {
            let last = levels.last().expect("non-empty");
            let mut up = vec![0.0; last.len() / card];
            for (k, p) in last.iter().enumerate() {
                up[k / card] += p;
            }
            levels.push(up);
        }
        levels.reverse();
        let names: Vec<&str> = vocab.context_vars.iter().map(|v| v.name.as_str()).collect();
        for (k, var) in vocab.context_vars.iter().enumerate() {
            b.variable_owned(&var.name, var.values.clone())?;
            let card = cards[k];
            let mut table = Vec::with_capacity(levels[k + 1].len());
            for (prefix, &mass) in levels[k].iter().enumerate() {
                for v in 0..card {
                    table.push(if mass > 0.0 {
                        levels[k + 1][prefix * card + v] / mass
                    } else {
                        1.0 / card as f64
                    });
                }
            }
            b.cpt(&var.name, &names[..k], table)?;
        }
        b.variable_owned("i_u", vocab.intentions.clone())?;
        let mut table = Vec::with_capacity(self.probs.len());
        for row in self.probs.chunks(self.ni) {
            let mass: f64 = row.iter().sum();
            if mass > 0.0 {
                table.extend(row.iter().map(|p| p / mass));
            } else {
                table.extend(std::iter::repeat_n(1.0 / self.ni as f64, self.ni));
            }
        }
        b.cpt("i_u", &names, table)?;
        Ok(b)
    }

    /// The belief as a Bayesian network over the context variables and `i_u`.
    pub fn to_network(&self, vocab: &Vocabulary) -> Result<Network> {
        self.network_builder(vocab)?.build()
    }
}

/// `λ(i', c) = Σ_u P(o | u) P(u | i', a_m, c)`.
pub fn observation_likelihoods(tables: &Tables, action: usize, likelihood: &[f64]) -> Vec<f64> {
    let d = tables.dims();
    let mut out = Vec::with_capacity(d.nc * d.ni);
    for c in 0..d.nc {
        for ip in 0..d.ni {
            out.push(tables.act_row(action, c, ip).iter().zip(likelihood).map(|(a, l)| a * l).sum());
        }
    }
    out
}

/// Filters the belief through one machine action and observation.
pub fn belief_update(tables: &Tables, belief: &BeliefState, action: usize, obs: &NBestList) -> Result<BeliefState> {
    let d = tables.dims();
    let predicted = tables.predict_intentions(&belief.probs, action);
    let lambda = observation_likelihoods(tables, action, &obs.likelihood(d.nu));
    let mut probs: Vec<f64> = predicted.iter().zip(&lambda).map(|(m, l)| m * l).collect();
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroLikelihood);
    }
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(BeliefState { probs, ..*belief })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerConfig {
    /// Parameter draws per updated Dirichlet.
    pub theta_samples: usize,
    /// Conditioning mass below which an entry is left alone.
    pub min_mass: f64,
    /// When false the transition model stays fixed.
    pub learn: bool,
    /// Posterior moments in closed form when the likelihood is linear in
    /// θ (multinomial entries) instead of by importance sampling.
    pub analytic_linear: bool,
    pub fit: FitOptions,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            theta_samples: 1000,
            min_mass: 1e-4,
            learn: true,
            analytic_linear: true,
            fit: FitOptions::default(),
        }
    }
}

/// Current parameter posteriors, belief, and learner settings.
#[derive(Clone, Debug)]
pub struct LearnerState {
    pub model: TransitionModel,
    pub belief: BeliefState,
    pub config: LearnerConfig,
    warnings: usize,
}

impl LearnerState {
    pub fn new(model: TransitionModel, belief: BeliefState, config: LearnerConfig) -> Self {
        Self {
            model,
            belief,
            config,
            warnings: 0,
        }
    }

    /// Count of updates skipped because every importance weight was zero
    /// or the refit failed.
    pub fn warnings(&self) -> usize {
        self.warnings
    }

    pub fn belief_update(&self, action: usize, obs: &NBestList) -> Result<BeliefState> {
        belief_update(self.model.tables(), &self.belief, action, obs)
    }

    /// Posterior refits for every parameter vector touched by this turn,
    /// computed against the pre-update belief. Returns the new Dirichlets
    /// and the number of skipped entries.
    pub fn parameter_update<R: Rng + ?Sized>(
        &self,
        action: usize,
        obs: &NBestList,
        rng: &mut R,
    ) -> Result<(Vec<(usize, DirichletParams)>, usize)> {
        let model = &self.model;
        let tables = model.tables();
        let d = tables.dims();
        let ell = obs.likelihood(d.nu);
        // A flat likelihood carries no information about any parameter.
        if ell.iter().all(|&l| l == ell[0]) {
            return if ell[0] > 0.0 { Ok((Vec::new(), 0)) } else { Err(Error::ZeroLikelihood) };
        }
        let predicted = tables.predict_intentions(&self.belief.probs, action);
        let lambda = observation_likelihoods(tables, action, &ell);
        let base: f64 = predicted.iter().zip(&lambda).map(|(m, l)| m * l).sum();
        if !(base > 0.0) {
            return Err(Error::ZeroLikelihood);
        }
        let n = self.config.theta_samples.max(2);
        let mut updates = Vec::new();
        let mut skipped = 0;
        for usage in model.param_usage(action) {
            let prior = model.param(usage.param);
            let k = prior.len();
            if k < 2 {
                continue;
            }
            // Per row: conditioning weight, value vector, and mean row.
            let rows: Vec<(usize, usize, f64)> = usage
                .rows
                .iter()
                .map(|&(c, x)| {
                    let w = match usage.side {
                        ModelSide::Act => predicted[c * d.ni + x],
                        ModelSide::Goal => self.belief.probs[c * d.ni + x],
                    };
                    (c, x, w)
                })
                .filter(|r| r.2 > 0.0)
                .collect();
            let mass: f64 = rows.iter().map(|r| r.2).sum();
            if mass <= self.config.min_mass {
                continue;
            }
            let values = |c: usize| -> &[f64] {
                match usage.side {
                    ModelSide::Act => &ell,
                    ModelSide::Goal => &lambda[c * d.ni..(c + 1) * d.ni],
                }
            };
            let mean_dot: Vec<f64> = rows
                .iter()
                .map(|&(c, x, _)| {
                    let mean = match usage.side {
                        ModelSide::Act => tables.act_row(action, c, x),
                        ModelSide::Goal => tables.goal_row(action, c, x),
                    };
                    dot(mean, values(c))
                })
                .collect();
            // For a multinomial entry the likelihood is linear in θ.
            let linear: Option<Vec<f64>> = matches!(model, TransitionModel::Multinomial(_)).then(|| {
                let mut v = vec![0.0; k];
                for &(c, _, w) in &rows {
                    for (vi, x) in v.iter_mut().zip(values(c)) {
                        *vi += w * x;
                    }
                }
                v
            });
            let alphas = prior.alphas();
            let target = match &linear {
                Some(v) if self.config.analytic_linear => linear_posterior_log_mean(alphas, v, base),
                _ => {
                    let mut row_buf = vec![0.0; if usage.side == ModelSide::Act { d.nu } else { d.ni }];
                    let linear_mean = linear.as_ref().map(|v| dot(&prior.mean_probs(), v));
                    let mut likelihood = |theta: &[f64]| -> f64 {
                        let delta = match (&linear, linear_mean) {
                            (Some(v), Some(lm)) => dot(theta, v) - lm,
                            _ => rows
                                .iter()
                                .zip(&mean_dot)
                                .map(|(&(c, x, w), md)| {
                                    model.row_with(usage.side, action, c, x, usage.param, theta, &mut row_buf);
                                    w * (dot(&row_buf, values(c)) - md)
                                })
                                .sum(),
                        };
                        (base + delta).max(0.0)
                    };
                    // Proposal Dir(α + r) with r the expected responsibilities
                    // m_k L(e_k) / Σ_j m_j L(e_j).
                    let mean = prior.mean_probs();
                    let mut vertex = vec![0.0; k];
                    let mut resp: Vec<f64> = (0..k)
                        .map(|j| {
                            vertex.iter_mut().enumerate().for_each(|(m, x)| *x = f64::from(u8::from(m == j)));
                            mean[j] * likelihood(&vertex)
                        })
                        .collect();
                    let resp_total: f64 = resp.iter().sum();
                    if resp_total > 0.0 {
                        resp.iter_mut().for_each(|r| *r /= resp_total);
                    } else {
                        resp.iter_mut().for_each(|r| *r = 0.0);
                    }
                    let proposal = prior.with_alphas(alphas.iter().zip(&resp).map(|(a, r)| a + r).collect())?;
                    let mut samples = vec![0.0; n * k];
                    let mut log_w = vec![f64::NEG_INFINITY; n];
                    for s in 0..n {
                        let theta = &mut samples[s * k..(s + 1) * k];
                        proposal.sample_into(rng, theta);
                        let theta = &samples[s * k..(s + 1) * k];
                        let l = likelihood(theta);
                        if l > 0.0 {
                            let tilt: f64 = resp.iter().zip(theta).map(|(r, t)| r * t.max(LOG_FLOOR).ln()).sum();
                            log_w[s] = l.ln() - tilt;
                        }
                    }
                    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if !top.is_finite() {
                        skipped += 1;
                        continue;
                    }
                    let weights: Vec<f64> = log_w.iter().map(|lw| (lw - top).exp()).collect();
                    let total: f64 = weights.iter().sum();
                    let q_alphas = proposal.alphas();
                    let psi0 = digamma(proposal.total());
                    let uniform = 1.0 / n as f64;
                    let mut target: Vec<f64> = q_alphas.iter().map(|&a| digamma(a) - psi0).collect();
                    for (s, w) in weights.iter().enumerate() {
                        let coef = w / total - uniform;
                        if coef == 0.0 {
                            continue;
                        }
                        for (t, th) in target.iter_mut().zip(&samples[s * k..(s + 1) * k]) {
                            *t += coef * th.max(LOG_FLOOR).ln();
                        }
                    }
                    target
                }
            };
            match fit_from_stats(&target, alphas, &self.config.fit) {
                Ok(fit) if fit.alphas.iter().all(|a| *a > 0.0 && a.is_finite()) => {
                    updates.push((usage.param, prior.with_alphas(fit.alphas)?));
                }
                _ => skipped += 1,
            }
        }
        Ok((updates, skipped))
    }

    /// Full turn: new belief from the old model, new model from the old
    /// belief, then both are committed.
    pub fn observe<R: Rng + ?Sized>(&mut self, action: usize, obs: &NBestList, rng: &mut R) -> Result<()> {
        let belief = self.belief_update(action, obs)?;
        if self.config.learn {
            let (updates, skipped) = self.parameter_update(action, obs, rng)?;
            self.warnings += skipped;
            self.model.set_params(updates)?;
        }
        self.belief = belief;
        Ok(())
    }
}

/// `E[ln θ]` under `Dir(θ; α) · (b₀ + ⟨v, θ⟩)`, which is a mixture of
/// `Dir(α)` and the `Dir(α + e_j)` with weights `b₀` and `v_j α_j / α₀`.
/// `z` is the normalizer `b₀ + ⟨v, E[θ]⟩`.
fn linear_posterior_log_mean(alphas: &[f64], v: &[f64], z: f64) -> Vec<f64> {
    let a0: f64 = alphas.iter().sum();
    let mean_dot: f64 = alphas.iter().zip(v).map(|(a, x)| a * x).sum::<f64>() / a0;
    let b0 = z - mean_dot;
    let psi0 = digamma(a0);
    let psi1 = digamma(a0 + 1.0);
    let psi: Vec<f64> = alphas.iter().map(|&a| digamma(a)).collect();
    (0..alphas.len())
        .map(|i| {
            // Mixture component j shifts only ψ(α_i) when i = j.
            let shifted: f64 = (0..alphas.len())
                .map(|j| {
                    let w = v[j] * alphas[j] / a0;
                    let log_i = if i == j { digamma(alphas[i] + 1.0) } else { psi[i] };
                    w * (log_i - psi1)
                })
                .sum();
            (b0 * (psi[i] - psi0) + shifted) / z
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
