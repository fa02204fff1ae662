//! Shared helpers for the integration suites: fixture loading, random toy
//! domains, and flat-state oracles.
#![allow(dead_code)]

use mbrl_dialogue::transition::Tables;
use mbrl_dialogue::{load_domain, DialogueState, DirichletParams, DomainSpec, ModelType, TransitionModel};
use rand::Rng;
use serde_json::json;

pub fn fixture_path(name: &str) -> String {
    format!("{}/fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(name: &str) -> DomainSpec {
    load_domain(fixture_path(name)).expect("fixture loads")
}

/// Shape of a random toy domain: intentions, plain actions, user acts and
/// the cardinality of each context variable.
#[derive(Clone, Debug)]
pub struct ToyShape {
    pub ni: usize,
    pub na: usize,
    pub nu: usize,
    pub contexts: Vec<usize>,
}

impl ToyShape {
    pub fn random<R: Rng>(rng: &mut R, max_states: usize) -> Self {
        loop {
            let shape = Self {
                ni: rng.random_range(2..=4),
                na: rng.random_range(1..=3),
                nu: rng.random_range(2..=6),
                contexts: (0..rng.random_range(0..=2)).map(|_| rng.random_range(2..=3)).collect(),
            };
            if shape.flat_states() <= max_states {
                return shape;
            }
        }
    }

    pub fn nc(&self) -> usize {
        self.contexts.iter().product()
    }

    pub fn flat_states(&self) -> usize {
        self.nu * self.ni * self.nc()
    }
}

/// A domain with one reward entry per (action, intention).
pub fn toy_domain(shape: &ToyShape, rewards: &[Vec<f64>]) -> DomainSpec {
    let intentions: Vec<String> = (0..shape.ni).map(|i| format!("S{i}")).collect();
    let acts: Vec<String> = (0..shape.nu).map(|u| format!("U{u}")).collect();
    let actions: Vec<_> = (0..shape.na)
        .map(|a| json!({"label": format!("A{a}"), "kind": "conversational"}))
        .collect();
    let contexts: Vec<_> = shape
        .contexts
        .iter()
        .enumerate()
        .map(|(k, &n)| json!({"name": format!("c{k}"), "values": (0..n).map(|v| format!("v{v}")).collect::<Vec<_>>()}))
        .collect();
    let mut reward_decls = Vec::new();
    for (a, row) in rewards.iter().enumerate() {
        for (i, r) in row.iter().enumerate() {
            reward_decls.push(json!({"action": format!("A{a}"), "when": format!("i_u == S{i}"), "value": r}));
        }
    }
    let doc = json!({
        "schema_version": 1,
        "name": "random-toy",
        "intentions": intentions,
        "user_acts": acts,
        "machine_actions": actions,
        "context_vars": contexts,
        "rewards": reward_decls,
        "model_config": {"prior_alpha": 2.0}
    });
    DomainSpec::from_json(&doc.to_string()).expect("toy domain is valid")
}

pub fn random_rewards<R: Rng>(rng: &mut R, shape: &ToyShape) -> Vec<Vec<f64>> {
    (0..shape.na)
        .map(|_| (0..shape.ni).map(|_| rng.random_range(-6.0..6.0)).collect())
        .collect()
}

/// Multinomial model with every entry replaced by a random Dirichlet.
pub fn random_model<R: Rng>(rng: &mut R, domain: &DomainSpec) -> TransitionModel {
    let mut model = TransitionModel::from_domain(domain, ModelType::Multinomial).unwrap();
    let updates: Vec<(usize, DirichletParams)> = (0..model.parameter_count())
        .map(|k| {
            let old = model.param(k);
            let alphas = (0..old.len()).map(|_| rng.random_range(0.2..5.0)).collect();
            (k, DirichletParams::new(alphas, old.labels().to_vec()).unwrap())
        })
        .collect();
    model.set_params(updates).unwrap();
    model
}

pub fn random_simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

pub fn state_of(domain: &DomainSpec, c: usize, i: usize) -> DialogueState {
    DialogueState {
        user_act: None,
        intention: i,
        context: domain.vocab().context_assignment(c),
    }
}

/// Planner observation channel rebuilt from its definition: `1 − ε` on the
/// heard act, `ε / |U|` on every other act and on the empty list.
pub fn channel(nu: usize, noise: f64, u: usize, o: usize) -> f64 {
    if o == u {
        1.0 - noise
    } else {
        noise / nu as f64
    }
}

/// Unpruned expectimax over the flat (context, intention) state space.
pub fn brute_force_q(domain: &DomainSpec, tables: &Tables, belief: &[f64], a: usize, h: usize, gamma: f64, noise: f64) -> f64 {
    let d = tables.dims();
    let n = d.nc * d.ni;
    let mut q = 0.0;
    for s in 0..n {
        q += belief[s] * domain.reward(&state_of(domain, s / d.ni, s % d.ni), a);
    }
    if h <= 1 {
        return q;
    }
    let mut next = vec![0.0; n];
    for s in 0..n {
        let (c, i) = (s / d.ni, s % d.ni);
        for ip in 0..d.ni {
            next[c * d.ni + ip] += belief[s] * tables.goal_row(a, c, i)[ip];
        }
    }
    let mut future = 0.0;
    for o in 0..=d.nu {
        let mut post = vec![0.0; n];
        for sp in 0..n {
            let (c, ip) = (sp / d.ni, sp % d.ni);
            let p_o: f64 = (0..d.nu).map(|u| tables.act_row(a, c, ip)[u] * channel(d.nu, noise, u, o)).sum();
            post[sp] = next[sp] * p_o;
        }
        let p: f64 = post.iter().sum();
        if p <= 0.0 {
            continue;
        }
        post.iter_mut().for_each(|x| *x /= p);
        let best = (0..d.na)
            .map(|a2| brute_force_q(domain, tables, &post, a2, h - 1, gamma, noise))
            .fold(f64::NEG_INFINITY, f64::max);
        future += p * best;
    }
    q + gamma * future
}

/// Property-test configuration with a fixed seed and no failure files.
pub fn cases(n: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases: n,
        rng_seed: proptest::test_runner::RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..proptest::test_runner::Config::default()
    }
}
