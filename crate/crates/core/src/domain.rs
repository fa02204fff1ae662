//! Dialogue domain vocabulary, the domain-file schema and the reward model.
//!
//! A domain file is a single JSON document:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "intentions": ["Left", "Right"],
//!   "user_acts": ["Request(Left)", "Request(Right)", "Confirm", "Disconfirm"],
//!   "machine_actions": [
//!     {"label": "Execute(X)", "kind": "physical"},
//!     {"label": "AskRepeat", "kind": "conversational"}
//!   ],
//!   "context_vars": [{"name": "holding", "values": ["nothing", "box"]}],
//!   "rewards": [{"action": "Execute(X)", "when": "i_u == X", "value": 6}],
//!   "model_config": {"prior_alpha": 2.0, "multinomial": {}, "rules": {"rules": []}},
//!   "simulator": {"rules": []}
//! }
//! ```
//!
//! Labels containing a standalone `X` are templates expanded over the
//! intentions (or over an explicit `args` list) at load time.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::belief::BeliefState;
use crate::condition::{Condition, Env, LabelPattern, Scope};
use crate::error::{Error, Result};
use crate::transition::{MultinomialModel, RuleModel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Conversational,
    Physical,
}

/// A concrete machine action after template expansion.
#[derive(Clone, Debug, PartialEq)]
pub struct MachineAction {
    pub label: String,
    pub template: String,
    /// Intention index of the template argument, if any.
    pub arg: Option<usize>,
    pub kind: ActionKind,
}

impl MachineAction {
    pub fn plain(label: &str, kind: ActionKind) -> Self {
        Self {
            label: label.to_string(),
            template: label.to_string(),
            arg: None,
            kind,
        }
    }

    pub fn templated(template: &str, arg_label: &str, arg: usize, kind: ActionKind) -> Self {
        Self {
            label: format!("{template}({arg_label})"),
            template: template.to_string(),
            arg: Some(arg),
            kind,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextVar {
    pub name: String,
    pub values: Vec<String>,
}

/// Label sets shared by every component of a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    pub intentions: Vec<String>,
    pub user_acts: Vec<String>,
    pub actions: Vec<MachineAction>,
    pub context_vars: Vec<ContextVar>,
}

impl Vocabulary {
    pub fn n_intentions(&self) -> usize {
        self.intentions.len()
    }

    pub fn n_acts(&self) -> usize {
        self.user_acts.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    /// Number of joint context assignments (1 with no context variables).
    pub fn n_contexts(&self) -> usize {
        self.context_vars.iter().map(|c| c.values.len()).product()
    }

    /// |S| = |user acts| × |intentions| × Π|context values|.
    pub fn state_count(&self) -> u128 {
        self.n_acts() as u128 * self.n_intentions() as u128 * self.n_contexts() as u128
    }

    /// Mixed-radix index of a context assignment (first variable most significant).
    pub fn context_index(&self, assignment: &[usize]) -> usize {
        self.context_vars
            .iter()
            .zip(assignment)
            .fold(0, |acc, (var, &v)| acc * var.values.len() + v)
    }

    pub fn context_assignment(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.context_vars.len()];
        for (k, var) in self.context_vars.iter().enumerate().rev() {
            out[k] = index % var.values.len();
            index /= var.values.len();
        }
        out
    }

    pub fn intention_index(&self, label: &str) -> Result<usize> {
        find(&self.intentions, label, "intention")
    }

    pub fn act_index(&self, label: &str) -> Result<usize> {
        find(&self.user_acts, label, "user act")
    }

    pub fn action_index(&self, label: &str) -> Result<usize> {
        self.actions
            .iter()
            .position(|a| a.label == label)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "machine action",
                label: label.to_string(),
            })
    }

    /// Context assignment from `(variable, value)` labels; every variable must appear.
    pub fn context_from_labels(&self, labels: &[(&str, &str)]) -> Result<Vec<usize>> {
        self.context_vars
            .iter()
            .map(|var| {
                let (_, value) = labels
                    .iter()
                    .find(|(n, _)| *n == var.name)
                    .ok_or_else(|| Error::UnknownVariable(var.name.clone()))?;
                find(&var.values, value, "context value")
            })
            .collect()
    }
}

fn find(list: &[String], label: &str, kind: &'static str) -> Result<usize> {
    list.iter().position(|l| l == label).ok_or_else(|| Error::UnknownLabel {
        kind,
        label: label.to_string(),
    })
}

// ---------------------------------------------------------------------------
// File schema
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub intentions: Vec<String>,
    pub user_acts: Vec<String>,
    pub machine_actions: Vec<ActionDecl>,
    #[serde(default)]
    pub context_vars: Vec<ContextVar>,
    pub rewards: Vec<RewardDecl>,
    #[serde(default)]
    pub model_config: ModelConfigDecl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulator: Option<SimulatorDecl>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionDecl {
    pub label: String,
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub args: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardDecl {
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    pub value: f64,
}

fn default_prior_alpha() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfigDecl {
    #[serde(default = "default_prior_alpha")]
    pub prior_alpha: f64,
    #[serde(default)]
    pub multinomial: MultinomialDecl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<RuleModelDecl>,
}

impl Default for ModelConfigDecl {
    fn default() -> Self {
        Self {
            prior_alpha: default_prior_alpha(),
            multinomial: MultinomialDecl::default(),
            rules: None,
        }
    }
}

/// Grouping of conditional assignments into Dirichlet entries. Empty group
/// lists mean one entry per (i_u', a_m) and per (i_u, a_m, c).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultinomialDecl {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub act_groups: Vec<GroupDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub goal_groups: Vec<GroupDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub priors: Vec<PriorDecl>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupDecl {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    pub given: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSide {
    Act,
    Goal,
}

/// Sets one pseudo-count of every multinomial entry whose rows match `when`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorDecl {
    pub model: ModelSide,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    pub set: String,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefaultName {
    Uniform,
    Persist,
}

/// Distribution an output variable keeps when every rule effect is void.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DefaultDecl {
    Named(DefaultName),
    Probs(BTreeMap<String, f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleModelDecl {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub act_default: Option<DefaultDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_default: Option<DefaultDecl>,
    /// Explicit Dirichlet priors by parameter name; others are symmetric.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, Vec<f64>>,
    pub rules: Vec<RuleDecl>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleDecl {
    pub name: String,
    pub cases: Vec<CaseDecl>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseDecl {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    pub effects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    /// When true the listed effects cover all the mass (no void outcome).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub exhaustive: bool,
}

fn default_noise() -> [f64; 3] {
    [5.4, 0.52, 1.6]
}

fn default_max_turns() -> usize {
    20
}

fn default_agenda() -> usize {
    3
}

fn default_completion() -> String {
    "a_m == Execute(X) && i_u == X".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorDecl {
    /// Initial intention distribution; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_intention: Option<BTreeMap<String, f64>>,
    /// Per-variable initial context distributions; uniform when absent.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial_context: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub act_default: Option<DefaultDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_default: Option<DefaultDecl>,
    pub rules: Vec<RuleDecl>,
    /// Dirichlet over (correct, incorrect, no recognition).
    #[serde(default = "default_noise")]
    pub noise: [f64; 3],
    #[serde(default = "default_max_turns")]
    pub max_turns: usize,
    /// Number of completed tasks that ends an episode.
    #[serde(default = "default_agenda")]
    pub agenda_length: usize,
    /// Condition over (a_m, i_u, c) marking the current task as completed.
    #[serde(default = "default_completion")]
    pub completion: String,
}

// ---------------------------------------------------------------------------
// Validated domain
// ---------------------------------------------------------------------------

/// A hidden dialogue state ⟨a_u, i_u, c⟩ as vocabulary indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DialogueState {
    pub user_act: Option<usize>,
    pub intention: usize,
    pub context: Vec<usize>,
}

impl DialogueState {
    pub fn from_labels(
        domain: &DomainSpec,
        user_act: Option<&str>,
        intention: &str,
        context: &[(&str, &str)],
    ) -> Result<Self> {
        let v = domain.vocab();
        Ok(Self {
            user_act: user_act.map(|a| v.act_index(a)).transpose()?,
            intention: v.intention_index(intention)?,
            context: v.context_from_labels(context)?,
        })
    }
}

/// A recognizer N-best list: user-act indices with confidences. An empty
/// list means nothing was recognized.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NBestList {
    entries: Vec<(usize, f64)>,
}

impl NBestList {
    pub fn new(entries: Vec<(usize, f64)>, n_acts: usize) -> Result<Self> {
        let mut total = 0.0;
        for (k, &(act, p)) in entries.iter().enumerate() {
            if act >= n_acts {
                return Err(Error::Validation(format!("N-best act index {act} out of range")));
            }
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Validation(format!("N-best probability {p} outside (0, 1]")));
            }
            if entries[..k].iter().any(|&(a, _)| a == act) {
                return Err(Error::Validation(format!("N-best act index {act} listed twice")));
            }
            total += p;
        }
        if total > 1.0 + 1e-9 {
            return Err(Error::Validation(format!("N-best probabilities sum to {total}")));
        }
        Ok(Self { entries })
    }

    pub fn from_labels(vocab: &Vocabulary, entries: &[(&str, f64)]) -> Result<Self> {
        let entries = entries
            .iter()
            .map(|&(l, p)| Ok((vocab.act_index(l)?, p)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries, vocab.n_acts())
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// A single hypothesis with confidence 1.
    pub fn point(act: usize) -> Self {
        Self {
            entries: vec![(act, 1.0)],
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// P(o | a_u') for every act: listed acts get their confidence, the
    /// residual mass is shared by the unlisted acts.
    pub fn likelihood(&self, n_acts: usize) -> Vec<f64> {
        let listed: f64 = self.entries.iter().map(|e| e.1).sum();
        let unlisted = n_acts - self.entries.len();
        let share = if unlisted > 0 {
            (1.0 - listed).max(0.0) / unlisted as f64
        } else {
            0.0
        };
        let mut out = vec![share; n_acts];
        for &(a, p) in &self.entries {
            out[a] = p;
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct RewardEntry {
    pub action_pattern: String,
    pub condition: Condition,
    pub value: f64,
}

/// A validated, immutable dialogue domain.
#[derive(Clone, Debug)]
pub struct DomainSpec {
    file: DomainFile,
    vocab: Vocabulary,
    rewards: Vec<RewardEntry>,
    /// Dense R[a][c][i].
    reward_table: Vec<f64>,
}

impl PartialEq for DomainSpec {
    fn eq(&self, other: &Self) -> bool {
        self.file == other.file
    }
}

pub fn load_domain(path: impl AsRef<Path>) -> Result<DomainSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    DomainSpec::from_json(&text)
}

pub fn save_domain(domain: &DomainSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, domain.to_json()).map_err(|e| Error::io(path.display().to_string(), e))
}

fn check_labels(kind: &str, labels: &[String]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::Validation(format!("{kind} list is empty")));
    }
    let mut seen = HashSet::new();
    for l in labels {
        if l.trim().is_empty() {
            return Err(Error::Validation(format!("empty {kind} label")));
        }
        if !seen.insert(l) {
            return Err(Error::Validation(format!("duplicate {kind} `{l}`")));
        }
    }
    Ok(())
}

fn expand_actions(decls: &[ActionDecl], intentions: &[String]) -> Result<Vec<MachineAction>> {
    let mut out = Vec::new();
    for decl in decls {
        let pattern = LabelPattern::parse(&decl.label);
        if pattern.has_wildcard() {
            return Err(Error::Validation(format!("action label `{}` contains `*`", decl.label)));
        }
        if !pattern.mentions_template() {
            if decl.args.is_some() {
                return Err(Error::Validation(format!("action `{}` has args but no X", decl.label)));
            }
            out.push(MachineAction::plain(&decl.label, decl.kind));
            continue;
        }
        let template = decl.label.split('(').next().unwrap_or(&decl.label).to_string();
        let args: Vec<String> = decl.args.clone().unwrap_or_else(|| intentions.to_vec());
        for arg in &args {
            let idx = intentions.iter().position(|i| i == arg).ok_or_else(|| {
                Error::Validation(format!("action `{}` argument `{arg}` is not an intention", decl.label))
            })?;
            let label = pattern.substitute(Some(arg)).expect("template without wildcard");
            out.push(MachineAction {
                label,
                template: template.clone(),
                arg: Some(idx),
                kind: decl.kind,
            });
        }
    }
    Ok(out)
}

impl DomainSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: DomainFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    pub fn from_file(file: DomainFile) -> Result<Self> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        check_labels("intention", &file.intentions)?;
        check_labels("user act", &file.user_acts)?;
        let actions = expand_actions(&file.machine_actions, &file.intentions)?;
        let action_labels: Vec<String> = actions.iter().map(|a| a.label.clone()).collect();
        check_labels("machine action", &action_labels)?;
        let names: Vec<String> = file.context_vars.iter().map(|c| c.name.clone()).collect();
        if !names.is_empty() {
            check_labels("context variable", &names)?;
        }
        for var in &file.context_vars {
            check_labels(&format!("context `{}` value", var.name), &var.values)?;
            if ["a_m", "i_u", "i_u'", "a_u", "a_u'", "X"].contains(&var.name.as_str()) {
                return Err(Error::Validation(format!("context name `{}` is reserved", var.name)));
            }
        }
        let vocab = Vocabulary {
            intentions: file.intentions.clone(),
            user_acts: file.user_acts.clone(),
            actions,
            context_vars: file.context_vars.clone(),
        };
        if vocab.n_contexts() as u128 * vocab.n_intentions() as u128 > 10_000_000 {
            return Err(Error::Validation("state space is too large".into()));
        }

        let mut rewards = Vec::new();
        for decl in &file.rewards {
            let mut condition = Condition::action_matches(&decl.action, &vocab)?;
            if let Some(when) = &decl.when {
                condition = condition.and(Condition::parse(when, &vocab, Scope::State)?);
            }
            if !decl.value.is_finite() {
                return Err(Error::Validation(format!("reward for `{}` is not finite", decl.action)));
            }
            rewards.push(RewardEntry {
                action_pattern: decl.action.clone(),
                condition,
                value: decl.value,
            });
        }
        let reward_table = build_reward_table(&vocab, &rewards)?;

        let spec = Self {
            file,
            vocab,
            rewards,
            reward_table,
        };
        // Compiling the models checks every label the model config references.
        MultinomialModel::from_domain(&spec)?;
        if spec.file.model_config.rules.is_some() {
            RuleModel::from_domain(&spec)?;
        }
        if spec.file.simulator.is_some() {
            crate::simulator::GroundTruth::from_domain(&spec)?;
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("domain files always serialize")
    }

    pub fn file(&self) -> &DomainFile {
        &self.file
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn reward_entries(&self) -> &[RewardEntry] {
        &self.rewards
    }

    pub fn prior_alpha(&self) -> f64 {
        self.file.model_config.prior_alpha
    }

    /// R(s, a_m): first matching entry in declaration order, 0 if none.
    pub fn reward(&self, state: &DialogueState, action: usize) -> f64 {
        let c = self.vocab.context_index(&state.context);
        self.reward_indexed(action, c, state.intention)
    }

    pub(crate) fn reward_indexed(&self, action: usize, context: usize, intention: usize) -> f64 {
        let ni = self.vocab.n_intentions();
        let nc = self.vocab.n_contexts();
        self.reward_table[(action * nc + context) * ni + intention]
    }

    /// Reward row over (context, intention) for one action.
    pub(crate) fn reward_row(&self, action: usize) -> &[f64] {
        let n = self.vocab.n_intentions() * self.vocab.n_contexts();
        &self.reward_table[action * n..(action + 1) * n]
    }

    /// R(b, a) = Σ_s R(s, a) b(s).
    pub fn belief_reward(&self, belief: &BeliefState, action: usize) -> f64 {
        self.reward_row(action)
            .iter()
            .zip(belief.probs())
            .map(|(r, p)| r * p)
            .sum()
    }
}

fn build_reward_table(vocab: &Vocabulary, rewards: &[RewardEntry]) -> Result<Vec<f64>> {
    let ni = vocab.n_intentions();
    let nc = vocab.n_contexts();
    let mut table = vec![0.0; vocab.n_actions() * nc * ni];
    let mut used = vec![false; rewards.len()];
    for a in 0..vocab.n_actions() {
        for c in 0..nc {
            let context = vocab.context_assignment(c);
            for i in 0..ni {
                let env = Env {
                    action: Some(a),
                    intention: Some(i),
                    next_intention: None,
                    context: &context,
                };
                if let Some(e) = rewards.iter().position(|r| r.condition.find_binding(vocab, &env).is_some()) {
                    table[(a * nc + c) * ni + i] = rewards[e].value;
                    used[e] = true;
                }
            }
        }
    }
    if let Some(e) = used.iter().position(|u| !u) {
        return Err(Error::Validation(format!(
            "reward entry for `{}` never applies to any state",
            rewards[e].action_pattern
        )));
    }
    Ok(table)
}
