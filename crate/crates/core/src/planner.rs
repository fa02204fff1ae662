//! Online depth-limited forward planning over beliefs.
//!
//! `Q(b, a, h) = R(b, a) + γ Σ_o P(o | b, a) max_a' Q(b''_o, a', h − 1)`,
//! with the sum restricted to the `k` most likely canonical observations
//! (one point-mass N-best per user act plus the empty list).

use std::time::{Duration, Instant};

use rand::Rng;

use crate::belief::BeliefState;
use crate::domain::{DomainSpec, NBestList};
use crate::error::{Error, Result};
use crate::transition::{ParamMode, Tables, TransitionModel};

#[derive(Clone, Debug, PartialEq)]
pub struct PlanConfig {
    pub horizon: usize,
    pub gamma: f64,
    pub obs_top_k: usize,
    pub deadline: Option<Duration>,
    /// Confusion mass of the planner's observation model.
    pub planner_noise: f64,
    pub param_mode: ParamMode,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            horizon: 2,
            gamma: 0.95,
            obs_top_k: 3,
            deadline: None,
            planner_noise: 0.1,
            param_mode: ParamMode::Mean,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.obs_top_k == 0 {
            return Err(Error::Config("obs_top_k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.planner_noise) {
            return Err(Error::Config(format!("planner_noise {} outside [0, 1]", self.planner_noise)));
        }
        Ok(())
    }
}

/// A canonical observation: a recognized act or nothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CanonicalObs {
    Act(usize),
    Empty,
}

impl CanonicalObs {
    pub fn to_nbest(self) -> NBestList {
        match self {
            CanonicalObs::Act(u) => NBestList::point(u),
            CanonicalObs::Empty => NBestList::empty(),
        }
    }
}

/// `P(o | a_u')` of the planner's noisy channel, indexed `[u][o]` with the
/// empty observation last.
pub fn observation_matrix(n_acts: usize, noise: f64) -> Vec<Vec<f64>> {
    let off = noise / n_acts as f64;
    (0..n_acts)
        .map(|u| {
            let mut row = vec![off; n_acts + 1];
            row[u] = 1.0 - noise;
            row
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult {
    pub action: usize,
    pub q_values: Vec<f64>,
    /// Deepest horizon fully evaluated.
    pub depth: usize,
    pub truncated: bool,
}

/// Planning context: domain rewards, one set of predictive tables, and the
/// observation channel.
pub struct Planner<'a> {
    domain: &'a DomainSpec,
    tables: &'a Tables,
    cfg: &'a PlanConfig,
    obs: Vec<Vec<f64>>,
}

struct Expired;

impl<'a> Planner<'a> {
    pub fn new(domain: &'a DomainSpec, tables: &'a Tables, cfg: &'a PlanConfig) -> Self {
        Self {
            domain,
            tables,
            cfg,
            obs: observation_matrix(tables.dims().nu, cfg.planner_noise),
        }
    }

    /// The `k` most likely canonical observations after `a`, with
    /// probabilities renormalized over the kept set and the belief each
    /// one leads to.
    pub fn top_k_observations(&self, belief: &BeliefState, action: usize, k: usize) -> Vec<(CanonicalObs, f64, Vec<f64>)> {
        let d = self.tables.dims();
        let predicted = self.tables.predict_intentions(belief.probs(), action);
        let act_probs = self.tables.act_marginal(&predicted, action);
        let n_obs = d.nu + 1;
        let mut p_obs = vec![0.0; n_obs];
        for (u, pu) in act_probs.iter().enumerate() {
            for (o, po) in p_obs.iter_mut().zip(&self.obs[u]) {
                *o += pu * po;
            }
        }
        let mut order: Vec<usize> = (0..n_obs).filter(|&o| p_obs[o] > 0.0).collect();
        order.sort_by(|&a, &b| p_obs[b].total_cmp(&p_obs[a]).then(a.cmp(&b)));
        order.truncate(k);
        let kept: f64 = order.iter().map(|&o| p_obs[o]).sum();
        order
            .into_iter()
            .filter_map(|o| {
                // b''(i', c) ∝ m(i', c) Σ_u P(u | i', a, c) P(o | u)
                let mut next = Vec::with_capacity(predicted.len());
                for c in 0..d.nc {
                    for ip in 0..d.ni {
                        let m = predicted[c * d.ni + ip];
                        let z: f64 = if m == 0.0 {
                            0.0
                        } else {
                            self.tables
                                .act_row(action, c, ip)
                                .iter()
                                .zip(&self.obs)
                                .map(|(a, row)| a * row[o])
                                .sum()
                        };
                        next.push(m * z);
                    }
                }
                let total: f64 = next.iter().sum();
                if !(total > 0.0) {
                    return None;
                }
                next.iter_mut().for_each(|x| *x /= total);
                let label = if o == d.nu { CanonicalObs::Empty } else { CanonicalObs::Act(o) };
                Some((label, p_obs[o] / kept, next))
            })
            .collect()
    }

    fn reward(&self, belief: &[f64], action: usize) -> f64 {
        self.domain
            .reward_row(action)
            .iter()
            .zip(belief)
            .map(|(r, p)| r * p)
            .sum()
    }

    fn q(&self, belief: &BeliefState, action: usize, h: usize, deadline: Option<Instant>) -> std::result::Result<f64, Expired> {
        if deadline.is_some_and(|t| Instant::now() >= t) {
            return Err(Expired);
        }
        let mut q = self.reward(belief.probs(), action);
        if h > 1 && self.cfg.gamma > 0.0 {
            let mut future = 0.0;
            for (_, p, next) in self.top_k_observations(belief, action, self.cfg.obs_top_k) {
                let next = BeliefState::from_raw(belief, next);
                let mut best = f64::NEG_INFINITY;
                for a2 in 0..self.tables.dims().na {
                    best = best.max(self.q(&next, a2, h - 1, deadline)?);
                }
                future += p * best;
            }
            q += self.cfg.gamma * future;
        }
        Ok(q)
    }

    /// `Q(b, a, h)` without a deadline.
    pub fn q_value(&self, belief: &BeliefState, action: usize, h: usize) -> f64 {
        self.q(belief, action, h.max(1), None).unwrap_or(f64::NAN)
    }

    /// Q for every action at the configured horizon. With a deadline, runs
    /// iterative deepening and keeps the deepest completed level.
    pub fn plan(&self, belief: &BeliefState) -> PlanResult {
        let na = self.tables.dims().na;
        let eval = |h: usize, deadline: Option<Instant>| -> Option<Vec<f64>> {
            (0..na).map(|a| self.q(belief, a, h, deadline).ok()).collect()
        };
        let (q_values, depth, truncated) = match self.cfg.deadline {
            None => (eval(self.cfg.horizon, None).expect("no deadline"), self.cfg.horizon, false),
            Some(budget) => {
                let deadline = Instant::now() + budget;
                // Depth 1 is always completed so an action is available.
                let mut best = (eval(1, None).expect("no deadline"), 1, self.cfg.horizon > 1);
                for h in 2..=self.cfg.horizon {
                    match eval(h, Some(deadline)) {
                        Some(q) => best = (q, h, h < self.cfg.horizon),
                        None => {
                            best.2 = true;
                            break;
                        }
                    }
                }
                best
            }
        };
        PlanResult {
            action: argmax(&q_values),
            q_values,
            depth,
            truncated,
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    best
}

/// Plans against the model's mean tables (or one posterior draw).
pub fn plan<R: Rng + ?Sized>(
    domain: &DomainSpec,
    model: &TransitionModel,
    belief: &BeliefState,
    cfg: &PlanConfig,
    rng: &mut R,
) -> PlanResult {
    match cfg.param_mode {
        ParamMode::Mean => Planner::new(domain, model.tables(), cfg).plan(belief),
        ParamMode::Sample => {
            let tables = model.sample_tables(rng);
            Planner::new(domain, &tables, cfg).plan(belief)
        }
    }
}

pub fn select_action<R: Rng + ?Sized>(
    domain: &DomainSpec,
    model: &TransitionModel,
    belief: &BeliefState,
    cfg: &PlanConfig,
    rng: &mut R,
) -> usize {
    plan(domain, model, belief, cfg, rng).action
}

pub fn q_value(domain: &DomainSpec, model: &TransitionModel, belief: &BeliefState, action: usize, h: usize, cfg: &PlanConfig) -> f64 {
    Planner::new(domain, model.tables(), cfg).q_value(belief, action, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_rows_normalize() {
        for row in observation_matrix(4, 0.1) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(row.len(), 5);
        }
    }

    #[test]
    fn argmax_prefers_first_tie() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0]), 0);
    }
}
