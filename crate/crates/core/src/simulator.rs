//! Ground-truth user simulator with a Dirichlet-distributed recognition
//! channel.
//!
//! Each turn the simulated user moves to a new intention, picks an act, and
//! the recognizer quality `(p_correct, p_incorrect, p_none)` is drawn from
//! the noise Dirichlet. The outcome is then drawn from that triple:
//!
//! - correct: `[(true, pc/(pc+pi)), (random wrong act, pi/(pc+pi))]`
//! - incorrect: `[(random wrong act, pc/(pc+pi)), (true, pi/(pc+pi))]`
//! - none: the empty list

use rand::Rng;

use crate::bayes_net::{sample_index, Distribution};
use crate::condition::{Condition, Env, Scope};
use crate::dirichlet::DirichletParams;
use crate::domain::{DialogueState, DomainSpec, NBestList, SimulatorDecl, Vocabulary};
use crate::error::{Error, Result};
use crate::transition::{weights_from_map, RuleModel, RuleSpec, Tables, TransitionModel};

/// Ground-truth dynamics read from a domain's `simulator` section.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    vocab: Vocabulary,
    model: RuleModel,
    initial_intention: Vec<f64>,
    initial_context: Vec<Vec<f64>>,
    noise: DirichletParams,
    max_turns: usize,
    agenda_length: usize,
    completion: Condition,
}

impl GroundTruth {
    pub fn from_domain(domain: &DomainSpec) -> Result<Self> {
        let decl = domain
            .file()
            .simulator
            .as_ref()
            .ok_or_else(|| Error::Config("domain has no simulator section".into()))?;
        Self::from_decl(domain.vocab(), decl)
    }

    fn from_decl(vocab: &Vocabulary, decl: &SimulatorDecl) -> Result<Self> {
        let model = RuleModel::compile(
            vocab,
            &RuleSpec {
                act_default: decl.act_default.as_ref(),
                goal_default: decl.goal_default.as_ref(),
                params: None,
                rules: &decl.rules,
                prior_alpha: 1.0,
                fixed_only: true,
            },
        )?;
        let initial_intention = match &decl.initial_intention {
            Some(map) => weights_from_map(map, &vocab.intentions, "intention")?,
            None => vec![1.0 / vocab.n_intentions() as f64; vocab.n_intentions()],
        };
        for name in decl.initial_context.keys() {
            if !vocab.context_vars.iter().any(|v| v.name == *name) {
                return Err(Error::UnknownVariable(name.clone()));
            }
        }
        let initial_context = vocab
            .context_vars
            .iter()
            .map(|var| match decl.initial_context.get(&var.name) {
                Some(map) => weights_from_map(map, &var.values, "context value"),
                None => Ok(vec![1.0 / var.values.len() as f64; var.values.len()]),
            })
            .collect::<Result<Vec<_>>>()?;
        let noise = DirichletParams::new(
            decl.noise.to_vec(),
            vec!["correct".into(), "incorrect".into(), "none".into()],
        )?;
        if decl.max_turns == 0 || decl.agenda_length == 0 {
            return Err(Error::Validation("max_turns and agenda_length must be positive".into()));
        }
        Ok(Self {
            vocab: vocab.clone(),
            model,
            initial_intention,
            initial_context,
            noise,
            max_turns: decl.max_turns,
            agenda_length: decl.agenda_length,
            completion: Condition::parse(&decl.completion, vocab, Scope::State)?,
        })
    }

    pub fn tables(&self) -> &Tables {
        self.model.mean_tables()
    }

    /// The true dynamics as a fixed transition model.
    pub fn transition_model(&self) -> TransitionModel {
        TransitionModel::Rules(self.model.clone())
    }

    pub fn noise(&self) -> &DirichletParams {
        &self.noise
    }

    pub fn max_turns(&self) -> usize {
        self.max_turns
    }

    pub fn agenda_length(&self) -> usize {
        self.agenda_length
    }
}

/// Which branch of the recognition channel produced an observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseOutcome {
    Correct,
    Incorrect,
    NotRecognized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub user_act: usize,
    pub observation: NBestList,
    pub outcome: NoiseOutcome,
}

/// Hidden simulator state.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatorState {
    pub intention: usize,
    pub context: Vec<usize>,
    pub context_index: usize,
    pub turn: usize,
    pub completed: usize,
    pub last_act: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Simulator {
    truth: GroundTruth,
    state: SimulatorState,
}

impl Simulator {
    /// A simulator with a freshly sampled initial state.
    pub fn new<R: Rng + ?Sized>(truth: GroundTruth, rng: &mut R) -> Self {
        let state = Self::initial_state(&truth, rng);
        Self { truth, state }
    }

    fn initial_state<R: Rng + ?Sized>(truth: &GroundTruth, rng: &mut R) -> SimulatorState {
        let intention = sample_index(&truth.initial_intention, rng);
        let context: Vec<usize> = truth.initial_context.iter().map(|w| sample_index(w, rng)).collect();
        SimulatorState {
            intention,
            context_index: truth.vocab.context_index(&context),
            context,
            turn: 0,
            completed: 0,
            last_act: None,
        }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.state = Self::initial_state(&self.truth, rng);
    }

    pub fn state(&self) -> &SimulatorState {
        &self.state
    }

    /// Overrides the hidden state (for tests and scripted scenarios).
    pub fn set_state(&mut self, state: SimulatorState) {
        self.state = state;
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn dialogue_state(&self) -> DialogueState {
        DialogueState {
            user_act: self.state.last_act,
            intention: self.state.intention,
            context: self.state.context.clone(),
        }
    }

    /// Exact `P(a_u')` implied by the true dynamics from the hidden state.
    pub fn actual_next_act_distribution(&self, action: usize) -> Distribution {
        let t = self.truth.tables();
        let c = self.state.context_index;
        let mut out = vec![0.0; t.dims().nu];
        for (ip, g) in t.goal_row(action, c, self.state.intention).iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(t.act_row(action, c, ip)) {
                *o += g * a;
            }
        }
        Distribution::from_weights(self.truth.vocab.user_acts.clone(), out).expect("ground-truth rows are normalized")
    }

    pub fn episode_done(&self) -> bool {
        self.state.turn >= self.truth.max_turns || self.state.completed >= self.truth.agenda_length
    }

    pub fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> StepResult {
        let vocab = &self.truth.vocab;
        let t = self.truth.tables();
        let s = &mut self.state;
        let env = Env {
            action: Some(action),
            intention: Some(s.intention),
            next_intention: None,
            context: &s.context,
        };
        if self.truth.completion.find_binding(vocab, &env).is_some() {
            s.completed += 1;
        }
        let next = sample_index(t.goal_row(action, s.context_index, s.intention), rng);
        let act = sample_index(t.act_row(action, s.context_index, next), rng);
        let triple = self.truth.noise.sample(rng);
        let p = triple.probs();
        let outcome = match sample_index(p, rng) {
            0 => NoiseOutcome::Correct,
            1 => NoiseOutcome::Incorrect,
            _ => NoiseOutcome::NotRecognized,
        };
        let nu = vocab.n_acts();
        let observation = match outcome {
            NoiseOutcome::NotRecognized => NBestList::empty(),
            _ if nu == 1 => NBestList::point(act),
            _ => {
                let mut wrong = rng.random_range(0..nu - 1);
                if wrong >= act {
                    wrong += 1;
                }
                let conf = p[0] / (p[0] + p[1]);
                let (top, second) = if outcome == NoiseOutcome::Correct { (act, wrong) } else { (wrong, act) };
                let entries: Vec<(usize, f64)> = [(top, conf), (second, 1.0 - conf)]
                    .into_iter()
                    .filter(|e| e.1 > 0.0)
                    .map(|(a, q)| (a, q.min(1.0)))
                    .collect();
                NBestList::new(entries, nu).unwrap_or_else(|_| NBestList::point(top))
            }
        };
        s.intention = next;
        s.turn += 1;
        s.last_act = Some(act);
        StepResult {
            user_act: act,
            observation,
            outcome,
        }
    }
}
