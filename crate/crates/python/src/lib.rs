//! Python bindings: domain loading, experiments, one-shot planning and
//! Dirichlet fitting.

use std::collections::BTreeMap;

use mbrl_dialogue::dirichlet::{fit_weighted, FitOptions};
use mbrl_dialogue::harness::AggregateRow;
use mbrl_dialogue::{
    load_domain, run_experiment as run, BeliefState, DomainSpec, EpisodeRecord, Error, ExperimentConfig, ModelType,
    PlanConfig, Planner, TransitionModel,
};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn model_type(name: &str) -> PyResult<ModelType> {
    name.parse().map_err(to_py)
}

/// A validated dialogue domain.
#[pyclass(frozen, name = "Domain")]
struct PyDomain {
    inner: DomainSpec,
}

#[pymethods]
impl PyDomain {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: load_domain(path).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: DomainSpec::from_json(text).map_err(to_py)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn intentions(&self) -> Vec<String> {
        self.inner.vocab().intentions.clone()
    }

    #[getter]
    fn user_acts(&self) -> Vec<String> {
        self.inner.vocab().user_acts.clone()
    }

    #[getter]
    fn actions(&self) -> Vec<String> {
        self.inner.vocab().actions.iter().map(|a| a.label.clone()).collect()
    }

    #[getter]
    fn state_count(&self) -> u128 {
        self.inner.vocab().state_count()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Q values at a belief given as `{intention: prob}` plus a fixed
    /// context `{variable: value}`. Returns `(selected, {action: q})`.
    #[pyo3(signature = (intention, context=BTreeMap::new(), model="multinomial", horizon=2, gamma=0.95, top_k=3))]
    fn plan(
        &self,
        intention: BTreeMap<String, f64>,
        context: BTreeMap<String, String>,
        model: &str,
        horizon: usize,
        gamma: f64,
        top_k: usize,
    ) -> PyResult<(String, BTreeMap<String, f64>)> {
        let vocab = self.inner.vocab();
        let pairs: Vec<(&str, &str)> = context.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        let c = vocab.context_index(&vocab.context_from_labels(&pairs).map_err(to_py)?);
        let ni = vocab.n_intentions();
        let mut probs = vec![0.0; ni * vocab.n_contexts()];
        let total: f64 = intention.values().sum();
        if !(total > 0.0) {
            return Err(PyValueError::new_err("intention probabilities must have positive mass"));
        }
        for (label, p) in &intention {
            probs[c * ni + vocab.intention_index(label).map_err(to_py)?] = p / total;
        }
        let belief = BeliefState::from_probs(vocab, probs).map_err(to_py)?;
        let model = TransitionModel::from_domain(&self.inner, model_type(model)?).map_err(to_py)?;
        let cfg = PlanConfig {
            horizon,
            gamma,
            obs_top_k: top_k,
            ..PlanConfig::default()
        };
        cfg.validate().map_err(to_py)?;
        let result = Planner::new(&self.inner, model.tables(), &cfg).plan(&belief);
        let q = vocab
            .actions
            .iter()
            .zip(&result.q_values)
            .map(|(a, q)| (a.label.clone(), *q))
            .collect();
        Ok((vocab.actions[result.action].label.clone(), q))
    }
}

/// One (run, episode) result.
#[pyclass(frozen, get_all, name = "EpisodeRecord")]
struct PyRecord {
    run: usize,
    episode: usize,
    total_return: f64,
    mean_kl: f64,
    turns: usize,
}

impl From<&EpisodeRecord> for PyRecord {
    fn from(r: &EpisodeRecord) -> Self {
        Self {
            run: r.run,
            episode: r.episode,
            total_return: r.total_return,
            mean_kl: r.mean_kl,
            turns: r.turns,
        }
    }
}

/// Per-episode mean and standard error across runs.
#[pyclass(frozen, get_all, name = "AggregateRow")]
struct PyAggregate {
    episode: usize,
    mean_return: f64,
    se_return: f64,
    mean_kl: f64,
    se_kl: f64,
}

impl From<&AggregateRow> for PyAggregate {
    fn from(r: &AggregateRow) -> Self {
        Self {
            episode: r.episode,
            mean_return: r.mean_return,
            se_return: r.se_return,
            mean_kl: r.mean_kl,
            se_kl: r.se_kl,
        }
    }
}

/// Learning runs against the domain's simulator. The GIL is released while
/// the runs execute.
#[pyfunction]
#[pyo3(signature = (domain, model, runs=1, episodes=1, horizon=2, seed=0, theta_samples=1000, oracle_model=false))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    domain: &PyDomain,
    model: &str,
    runs: usize,
    episodes: usize,
    horizon: usize,
    seed: u64,
    theta_samples: usize,
    oracle_model: bool,
) -> PyResult<(Vec<PyRecord>, Vec<PyAggregate>)> {
    let mut cfg = ExperimentConfig::new(domain.inner.clone(), model_type(model)?);
    cfg.runs = runs;
    cfg.episodes = episodes;
    cfg.plan.horizon = horizon;
    cfg.seed = seed;
    cfg.learner.theta_samples = theta_samples;
    cfg.oracle_model = oracle_model;
    let result = py.detach(|| run(&cfg)).map_err(to_py)?;
    Ok((
        result.records.iter().map(PyRecord::from).collect(),
        result.aggregate.iter().map(PyAggregate::from).collect(),
    ))
}

/// Maximum-likelihood Dirichlet for rows of probabilities.
#[pyfunction]
#[pyo3(signature = (rows, weights=None))]
fn fit_dirichlet(rows: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let fit = fit_weighted(&refs, weights.as_deref(), &FitOptions::default()).map_err(to_py)?;
    Ok(fit.alphas)
}

#[pymodule]
fn mbrl_dialogue_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDomain>()?;
    m.add_class::<PyRecord>()?;
    m.add_class::<PyAggregate>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(fit_dirichlet, m)?)?;
    Ok(())
}
