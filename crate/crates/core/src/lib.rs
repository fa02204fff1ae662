//! Model-based Bayesian reinforcement learning for factored POMDP dialogue.
//!
//! The dialogue state is `⟨a_u, i_u, c⟩`: the last user act, the user's
//! intention, and a set of context variables. The learner tracks a belief
//! over `(i_u, c)`, keeps Dirichlet posteriors over the user's goal and act
//! dynamics, and plans with a depth-limited lookahead over beliefs.

pub mod bayes_net;
pub mod belief;
pub mod condition;
pub mod dirichlet;
pub mod domain;
pub mod error;
pub mod harness;
pub mod planner;
pub mod simulator;
pub mod transition;

pub use bayes_net::{Distribution, Evidence, InferenceMethod, Network, NetworkBuilder};
pub use belief::{belief_update, BeliefState, LearnerConfig, LearnerState};
pub use dirichlet::DirichletParams;
pub use domain::{load_domain, save_domain, DialogueState, DomainSpec, NBestList, Vocabulary};
pub use error::{Error, Result};
pub use harness::{kl_divergence, run_episode, run_experiment, EpisodeRecord, ExperimentConfig, Policy};
pub use planner::{plan, q_value, select_action, PlanConfig, PlanResult, Planner};
pub use simulator::{GroundTruth, Simulator};
pub use transition::{ModelType, ParamMode, TransitionModel};
