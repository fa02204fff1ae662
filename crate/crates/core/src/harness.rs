//! Experiment driver: learning episodes against the simulator, metrics, and
//! CSV output.
//!
//! Detail CSV columns: `run,episode,return,mean_kl,turns,wall_ms`.
//! Aggregate CSV columns: `episode,mean_return,se_return,mean_kl,se_kl`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bayes_net::Distribution;
use crate::belief::{BeliefState, LearnerConfig, LearnerState};
use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::planner::{plan, PlanConfig};
use crate::simulator::{GroundTruth, Simulator};
use crate::transition::{ModelType, ParamMode, TransitionModel};

/// Smoothing added to the predicted distribution before taking the KL.
pub const KL_SMOOTHING: f64 = 1e-6;

/// `Σ p ln(p / q)` in nats, on raw probability vectors.
pub fn kl_divergence_probs(p: &[f64], q: &[f64]) -> f64 {
    let total: f64 = q.iter().map(|x| x + KL_SMOOTHING).sum();
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / ((qi + KL_SMOOTHING) / total)).ln())
        .sum::<f64>()
        .max(0.0)
}

/// `KL(p ‖ q)` with `q` smoothed by [`KL_SMOOTHING`] and renormalized.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.support() != q.support() {
        return Err(Error::Distribution("KL divergence needs identical supports".into()));
    }
    Ok(kl_divergence_probs(p.probs(), q.probs()))
}

/// Where actions come from during an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    Planner,
    /// Always the same action index.
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub run: usize,
    pub episode: usize,
    pub total_return: f64,
    pub mean_kl: f64,
    pub turns: usize,
    pub wall_ms: u64,
    /// Turns whose observation had zero likelihood and were ignored.
    pub skipped_turns: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TurnTrace {
    pub run: usize,
    pub episode: usize,
    pub turn: usize,
    pub true_intention: String,
    pub action: String,
    pub reward: f64,
    pub user_act: String,
    pub observation: String,
    pub kl: f64,
    pub belief_top: String,
    pub belief_top_prob: f64,
}

/// Runs one episode from a fresh simulator state. The learner's model
/// carries over from earlier episodes; its belief is reset.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    domain: &DomainSpec,
    learner: &mut LearnerState,
    sim: &mut Simulator,
    plan_cfg: &PlanConfig,
    policy: Policy,
    rng: &mut ChaCha8Rng,
    ids: (usize, usize),
    mut traces: Option<&mut Vec<TurnTrace>>,
) -> Result<EpisodeRecord> {
    let vocab = domain.vocab();
    let start = Instant::now();
    sim.reset(rng);
    let mut belief = BeliefState::uniform(vocab);
    belief.observe_context(sim.state().context_index)?;
    learner.belief = belief;
    let (mut total, mut kl_sum, mut turns, mut skipped) = (0.0, 0.0, 0, 0);
    while !sim.episode_done() {
        let action = match policy {
            Policy::Planner => plan(domain, &learner.model, &learner.belief, plan_cfg, rng).action,
            Policy::Fixed(a) => a,
        };
        let true_state = sim.dialogue_state();
        let reward = domain.reward(&true_state, action);
        let actual = sim.actual_next_act_distribution(action);
        let predicted = learner
            .model
            .predict_user_act(vocab, &learner.belief, action, ParamMode::Mean, rng)?;
        let kl = kl_divergence(&actual, &predicted)?;
        let step = sim.step(action, rng);
        match learner.observe(action, &step.observation, rng) {
            Ok(()) => {}
            Err(Error::ZeroLikelihood) => skipped += 1,
            Err(e) => return Err(e),
        }
        if let Some(t) = traces.as_deref_mut() {
            let marg = learner.belief.intention_marginal();
            let top = crate::planner::argmax(&marg);
            let obs: Vec<String> = step
                .observation
                .entries()
                .iter()
                .map(|(a, p)| format!("{}:{p:.4}", vocab.user_acts[*a]))
                .collect();
            t.push(TurnTrace {
                run: ids.0,
                episode: ids.1,
                turn: turns,
                true_intention: vocab.intentions[true_state.intention].clone(),
                action: vocab.actions[action].label.clone(),
                reward,
                user_act: vocab.user_acts[step.user_act].clone(),
                observation: obs.join(" "),
                kl,
                belief_top: vocab.intentions[top].clone(),
                belief_top_prob: marg[top],
            });
        }
        total += reward;
        kl_sum += kl;
        turns += 1;
    }
    Ok(EpisodeRecord {
        run: ids.0,
        episode: ids.1,
        total_return: total,
        mean_kl: if turns > 0 { kl_sum / turns as f64 } else { 0.0 },
        turns,
        wall_ms: start.elapsed().as_millis() as u64,
        skipped_turns: skipped,
    })
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub model_type: ModelType,
    pub runs: usize,
    pub episodes: usize,
    pub plan: PlanConfig,
    pub learner: LearnerConfig,
    pub seed: u64,
    /// Replace the learned model with the simulator's true dynamics.
    pub oracle_model: bool,
    pub record_wall_time: bool,
    pub traces_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(domain: DomainSpec, model_type: ModelType) -> Self {
        Self {
            domain,
            model_type,
            runs: 1,
            episodes: 1,
            plan: PlanConfig::default(),
            learner: LearnerConfig::default(),
            seed: 0,
            oracle_model: false,
            record_wall_time: false,
            traces_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 || self.episodes == 0 {
            return Err(Error::Config("runs and episodes must be at least 1".into()));
        }
        if self.learner.theta_samples < 2 {
            return Err(Error::Config("theta_samples must be at least 2".into()));
        }
        self.plan.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub episode: usize,
    pub mean_return: f64,
    pub se_return: f64,
    pub mean_kl: f64,
    pub se_kl: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    /// Ordered by run, then episode.
    pub records: Vec<EpisodeRecord>,
    pub aggregate: Vec<AggregateRow>,
    pub traces: Vec<TurnTrace>,
}

/// Per-run RNG: the master seed with the run index as stream.
pub fn run_rng(seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

fn run_one(cfg: &ExperimentConfig, truth: &GroundTruth, run: usize) -> Result<(Vec<EpisodeRecord>, Vec<TurnTrace>)> {
    let mut rng = run_rng(cfg.seed, run);
    let model = if cfg.oracle_model {
        truth.transition_model()
    } else {
        TransitionModel::from_domain(&cfg.domain, cfg.model_type)?
    };
    let mut learner_cfg = cfg.learner.clone();
    if cfg.oracle_model {
        learner_cfg.learn = false;
    }
    let vocab = cfg.domain.vocab();
    let mut learner = LearnerState::new(model, BeliefState::uniform(vocab), learner_cfg);
    let mut sim = Simulator::new(truth.clone(), &mut rng);
    let mut records = Vec::with_capacity(cfg.episodes);
    let mut traces = Vec::new();
    for episode in 0..cfg.episodes {
        let sink = cfg.traces_dir.is_some().then_some(&mut traces);
        let mut rec = run_episode(
            &cfg.domain,
            &mut learner,
            &mut sim,
            &cfg.plan,
            Policy::Planner,
            &mut rng,
            (run, episode),
            sink,
        )?;
        if !cfg.record_wall_time {
            rec.wall_ms = 0;
        }
        records.push(rec);
    }
    Ok((records, traces))
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-episode means and standard errors across runs.
pub fn aggregate(records: &[EpisodeRecord], episodes: usize) -> Vec<AggregateRow> {
    (0..episodes)
        .map(|e| {
            let rows: Vec<&EpisodeRecord> = records.iter().filter(|r| r.episode == e).collect();
            let returns: Vec<f64> = rows.iter().map(|r| r.total_return).collect();
            let kls: Vec<f64> = rows.iter().map(|r| r.mean_kl).collect();
            let (mean_return, se_return) = mean_se(&returns);
            let (mean_kl, se_kl) = mean_se(&kls);
            AggregateRow {
                episode: e,
                mean_return,
                se_return,
                mean_kl,
                se_kl,
            }
        })
        .collect()
}

/// Runs every (run, episode) pair; runs execute in parallel.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let truth = GroundTruth::from_domain(&cfg.domain)?;
    let per_run: Vec<(Vec<EpisodeRecord>, Vec<TurnTrace>)> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| run_one(cfg, &truth, run))
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(cfg.runs * cfg.episodes);
    let mut traces = Vec::new();
    for (r, t) in per_run {
        records.extend(r);
        traces.extend(t);
    }
    let aggregate = aggregate(&records, cfg.episodes);
    Ok(ExperimentResult {
        records,
        aggregate,
        traces,
    })
}

/// `results.csv` → `results_aggregate.csv`.
pub fn aggregate_path(detail: &Path) -> PathBuf {
    let stem = detail.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    detail.with_file_name(format!("{stem}_aggregate.csv"))
}

pub fn write_detail_csv(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["run", "episode", "return", "mean_kl", "turns", "wall_ms"])?;
    for r in records {
        w.write_record([
            r.run.to_string(),
            r.episode.to_string(),
            r.total_return.to_string(),
            r.mean_kl.to_string(),
            r.turns.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", "mean_return", "se_return", "mean_kl", "se_kl"])?;
    for r in rows {
        w.write_record([
            r.episode.to_string(),
            r.mean_return.to_string(),
            r.se_return.to_string(),
            r.mean_kl.to_string(),
            r.se_kl.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes one trace CSV per run into `dir`.
pub fn write_traces(dir: &Path, traces: &[TurnTrace]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut runs: Vec<usize> = traces.iter().map(|t| t.run).collect();
    runs.dedup();
    for run in runs {
        let path = dir.join(format!("trace_run{run}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "run", "episode", "turn", "true_intention", "action", "reward", "user_act", "observation", "kl",
            "belief_top", "belief_top_prob",
        ])?;
        for t in traces.iter().filter(|t| t.run == run) {
            w.write_record([
                t.run.to_string(),
                t.episode.to_string(),
                t.turn.to_string(),
                t.true_intention.clone(),
                t.action.clone(),
                t.reward.to_string(),
                t.user_act.clone(),
                t.observation.clone(),
                t.kl.to_string(),
                t.belief_top.clone(),
                t.belief_top_prob.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}
