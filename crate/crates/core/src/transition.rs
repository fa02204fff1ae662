//! Transition models over the user's next intention and act.
//!
//! Both encodings compile to dense predictive tables indexed by machine
//! action, context, and intention:
//!
//! - goal model `P(i_u' | i_u, a_m, c)`
//! - act model `P(a_u' | i_u', a_m, c)`
//!
//! A [`MultinomialModel`] holds one Dirichlet per group of conditional
//! assignments. A [`RuleModel`] holds ordered rules whose cases put a
//! Dirichlet (or fixed probabilities) over a few effects plus a void
//! outcome. Rules that assert different values split the mass uniformly.
//! When every rule is void, the output keeps its default distribution.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;

use crate::bayes_net::{Distribution, Network, NetworkBuilder};
use crate::belief::BeliefState;
use crate::condition::{resolve_word, split_assignment, Condition, Env, LabelPattern, Operand, Scope, Var};
use crate::dirichlet::DirichletParams;
use crate::domain::{DefaultDecl, DefaultName, DomainSpec, GroupDecl, ModelSide, PriorDecl, RuleDecl, Vocabulary};
use crate::error::{Error, Result};

/// Largest CPT an instantiated network may contain.
const MAX_CPT_ENTRIES: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelType {
    Multinomial,
    Rules,
}

impl FromStr for ModelType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial" => Ok(Self::Multinomial),
            "rules" => Ok(Self::Rules),
            other => Err(Error::Config(format!("unknown model type `{other}`"))),
        }
    }
}

impl std::fmt::Display for ModelType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Multinomial => "multinomial",
            Self::Rules => "rules",
        })
    }
}

/// How parameters are turned into predictive tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamMode {
    /// Dirichlet means.
    Mean,
    /// One draw from every Dirichlet.
    Sample,
}

/// Table sizes: machine actions, contexts, intentions, user acts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub na: usize,
    pub nc: usize,
    pub ni: usize,
    pub nu: usize,
}

impl Dims {
    pub fn of(vocab: &Vocabulary) -> Self {
        Self {
            na: vocab.n_actions(),
            nc: vocab.n_contexts(),
            ni: vocab.n_intentions(),
            nu: vocab.n_acts(),
        }
    }

    /// Row index of `(a_m, c, intention)`, shared by act and goal rows.
    pub fn row(&self, a: usize, c: usize, i: usize) -> usize {
        (a * self.nc + c) * self.ni + i
    }

    fn out_len(&self, side: ModelSide) -> usize {
        match side {
            ModelSide::Act => self.nu,
            ModelSide::Goal => self.ni,
        }
    }
}

/// Dense predictive tables `act[a][c][i'][u]` and `goal[a][c][i][i']`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tables {
    dims: Dims,
    act: Vec<f64>,
    goal: Vec<f64>,
}

impl Tables {
    fn zeros(dims: Dims) -> Self {
        let rows = dims.na * dims.nc * dims.ni;
        Self {
            dims,
            act: vec![0.0; rows * dims.nu],
            goal: vec![0.0; rows * dims.ni],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn act_row(&self, a: usize, c: usize, next_intention: usize) -> &[f64] {
        let n = self.dims.nu;
        let r = self.dims.row(a, c, next_intention);
        &self.act[r * n..(r + 1) * n]
    }

    pub fn goal_row(&self, a: usize, c: usize, intention: usize) -> &[f64] {
        let n = self.dims.ni;
        let r = self.dims.row(a, c, intention);
        &self.goal[r * n..(r + 1) * n]
    }

    fn row_mut(&mut self, side: ModelSide, row: usize) -> &mut [f64] {
        match side {
            ModelSide::Act => {
                let n = self.dims.nu;
                &mut self.act[row * n..(row + 1) * n]
            }
            ModelSide::Goal => {
                let n = self.dims.ni;
                &mut self.goal[row * n..(row + 1) * n]
            }
        }
    }

    /// `m(i', c) = Σ_i b(i, c) P(i' | i, a_m, c)`, laid out like a belief.
    pub fn predict_intentions(&self, belief: &[f64], a: usize) -> Vec<f64> {
        let Dims { nc, ni, .. } = self.dims;
        let mut out = vec![0.0; nc * ni];
        for c in 0..nc {
            for i in 0..ni {
                let p = belief[c * ni + i];
                if p == 0.0 {
                    continue;
                }
                for (o, g) in out[c * ni..(c + 1) * ni].iter_mut().zip(self.goal_row(a, c, i)) {
                    *o += p * g;
                }
            }
        }
        out
    }

    /// `P(a_u') = Σ_{i',c} m(i', c) P(a_u' | i', a_m, c)`.
    pub fn act_marginal(&self, predicted: &[f64], a: usize) -> Vec<f64> {
        let Dims { nc, ni, nu, .. } = self.dims;
        let mut out = vec![0.0; nu];
        for c in 0..nc {
            for ip in 0..ni {
                let p = predicted[c * ni + ip];
                if p == 0.0 {
                    continue;
                }
                for (o, q) in out.iter_mut().zip(self.act_row(a, c, ip)) {
                    *o += p * q;
                }
            }
        }
        out
    }
}

/// Rows of one action in which a parameter vector is used.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamUse {
    pub param: usize,
    pub side: ModelSide,
    /// `(context, intention)` pairs; the intention is `i_u'` for act rows
    /// and `i_u` for goal rows.
    pub rows: Vec<(usize, usize)>,
}

// ---------------------------------------------------------------------------
// Multinomial model
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum GivenVar {
    Action,
    Intention,
    Context(usize),
}

#[derive(Clone, Debug)]
struct Group {
    name: String,
    when: Condition,
    given: Vec<GivenVar>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultinomialEntry {
    pub side: ModelSide,
    pub label: String,
    pub params: DirichletParams,
}

/// Collections of Dirichlet-parameterised multinomials.
#[derive(Clone, Debug)]
pub struct MultinomialModel {
    dims: Dims,
    entries: Vec<MultinomialEntry>,
    /// Entry index per act row and per goal row.
    act_route: Vec<usize>,
    goal_route: Vec<usize>,
    usage: Vec<Vec<ParamUse>>,
    tables: Tables,
}

fn scope_of(side: ModelSide) -> Scope {
    match side {
        ModelSide::Act => Scope::NextState,
        ModelSide::Goal => Scope::State,
    }
}

fn side_name(side: ModelSide) -> &'static str {
    match side {
        ModelSide::Act => "act",
        ModelSide::Goal => "goal",
    }
}

fn row_env<'a>(side: ModelSide, a: usize, x: usize, context: &'a [usize]) -> Env<'a> {
    match side {
        ModelSide::Act => Env {
            action: Some(a),
            intention: None,
            next_intention: Some(x),
            context,
        },
        ModelSide::Goal => Env {
            action: Some(a),
            intention: Some(x),
            next_intention: None,
            context,
        },
    }
}

fn parse_condition(src: Option<&str>, vocab: &Vocabulary, scope: Scope) -> Result<Condition> {
    match src {
        Some(s) => Condition::parse(s, vocab, scope),
        None => Ok(Condition::always()),
    }
}

fn output_labels(vocab: &Vocabulary, side: ModelSide) -> &[String] {
    match side {
        ModelSide::Act => &vocab.user_acts,
        ModelSide::Goal => &vocab.intentions,
    }
}

fn compile_groups(decls: &[GroupDecl], side: ModelSide, vocab: &Vocabulary) -> Result<Vec<Group>> {
    if decls.is_empty() {
        let mut given = vec![GivenVar::Intention, GivenVar::Action];
        if side == ModelSide::Goal {
            given.extend((0..vocab.context_vars.len()).map(GivenVar::Context));
        }
        return Ok(vec![Group {
            name: side_name(side).to_string(),
            when: Condition::always(),
            given,
        }]);
    }
    decls
        .iter()
        .enumerate()
        .map(|(g, d)| {
            let when = parse_condition(d.when.as_deref(), vocab, scope_of(side))?;
            let given = d
                .given
                .iter()
                .map(|name| match (resolve_word(name, vocab), side) {
                    (Operand::Var(Var::MachineAction), _) => Ok(GivenVar::Action),
                    (Operand::Var(Var::NextIntention), ModelSide::Act) => Ok(GivenVar::Intention),
                    (Operand::Var(Var::Intention), ModelSide::Goal) => Ok(GivenVar::Intention),
                    (Operand::Var(Var::Context(k)), _) => Ok(GivenVar::Context(k)),
                    _ => Err(Error::Validation(format!(
                        "`{name}` cannot condition the {} model",
                        side_name(side)
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            let name = if d.name.is_empty() {
                format!("{}{g}", side_name(side))
            } else {
                d.name.clone()
            };
            Ok(Group { name, when, given })
        })
        .collect()
}

/// Applies a prior override to every row it matches. Returns the number of
/// pseudo-counts set.
fn apply_prior(
    decl: &PriorDecl,
    vocab: &Vocabulary,
    entries: &mut [MultinomialEntry],
    route: &[usize],
    offset: usize,
) -> Result<usize> {
    let side = decl.model;
    let dims = Dims::of(vocab);
    let when = parse_condition(decl.when.as_deref(), vocab, scope_of(side))?;
    let (lhs, rhs) = split_assignment(&decl.set)?;
    let expected = match side {
        ModelSide::Act => "a_u'",
        ModelSide::Goal => "i_u'",
    };
    if lhs != expected {
        return Err(Error::Validation(format!(
            "prior `{}` must assign {expected}",
            decl.set
        )));
    }
    if !(decl.alpha > 0.0 && decl.alpha.is_finite()) {
        return Err(Error::Validation(format!("prior `{}` has non-positive alpha", decl.set)));
    }
    let pattern = LabelPattern::parse(rhs.trim_matches('\''));
    let labels = output_labels(vocab, side);
    let templated = when.uses_template() || pattern.mentions_template();
    let mut applied = 0;
    for a in 0..dims.na {
        for c in 0..dims.nc {
            let context = vocab.context_assignment(c);
            for x in 0..dims.ni {
                let env = row_env(side, a, x, &context);
                let bindings: Vec<Option<usize>> = if templated {
                    (0..dims.ni).map(Some).collect()
                } else {
                    vec![None]
                };
                for binding in bindings {
                    if !when.eval(vocab, &env, binding) {
                        continue;
                    }
                    let label = pattern.substitute(binding.map(|b| vocab.intentions[b].as_str()));
                    let Some(v) = label.and_then(|l| labels.iter().position(|x| *x == l)) else {
                        continue;
                    };
                    let e = route[dims.row(a, c, x)] - offset;
                    entries[e].params.set_alpha(v, decl.alpha);
                    applied += 1;
                }
            }
        }
    }
    Ok(applied)
}

impl MultinomialModel {
    pub fn from_domain(domain: &DomainSpec) -> Result<Self> {
        let vocab = domain.vocab();
        let cfg = &domain.file().model_config;
        let dims = Dims::of(vocab);
        let alpha = cfg.prior_alpha;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Validation(format!("prior_alpha {alpha} must be positive")));
        }
        let mut entries = Vec::new();
        let mut routes = Vec::new();
        for side in [ModelSide::Act, ModelSide::Goal] {
            let decls = match side {
                ModelSide::Act => &cfg.multinomial.act_groups,
                ModelSide::Goal => &cfg.multinomial.goal_groups,
            };
            let groups = compile_groups(decls, side, vocab)?;
            let labels = output_labels(vocab, side).to_vec();
            let mut index: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
            let mut route = vec![0; dims.na * dims.nc * dims.ni];
            for a in 0..dims.na {
                for c in 0..dims.nc {
                    let context = vocab.context_assignment(c);
                    for x in 0..dims.ni {
                        let env = row_env(side, a, x, &context);
                        let g = groups
                            .iter()
                            .position(|g| g.when.find_binding(vocab, &env).is_some())
                            .ok_or_else(|| {
                                Error::Validation(format!(
                                    "no {} group covers a_m={}, intention={}, context={}",
                                    side_name(side),
                                    vocab.actions[a].label,
                                    vocab.intentions[x],
                                    c
                                ))
                            })?;
                        let key: Vec<usize> = groups[g]
                            .given
                            .iter()
                            .map(|v| match v {
                                GivenVar::Action => a,
                                GivenVar::Intention => x,
                                GivenVar::Context(k) => context[*k],
                            })
                            .collect();
                        let next = entries.len();
                        let e = *index.entry((g, key.clone())).or_insert_with(|| {
                            let label = describe_key(vocab, side, &groups[g], &key);
                            entries.push(MultinomialEntry {
                                side,
                                label,
                                params: DirichletParams::symmetric(alpha, labels.clone())
                                    .expect("positive alpha"),
                            });
                            next
                        });
                        route[dims.row(a, c, x)] = e;
                    }
                }
            }
            routes.push(route);
        }
        let goal_route = routes.pop().expect("two sides");
        let act_route = routes.pop().expect("two sides");
        let n_act = entries.iter().filter(|e| e.side == ModelSide::Act).count();
        for prior in &cfg.multinomial.priors {
            let applied = match prior.model {
                ModelSide::Act => apply_prior(prior, vocab, &mut entries[..n_act], &act_route, 0)?,
                ModelSide::Goal => apply_prior(prior, vocab, &mut entries[n_act..], &goal_route, n_act)?,
            };
            if applied == 0 {
                return Err(Error::Validation(format!("prior `{}` never applies", prior.set)));
            }
        }
        let mut usage = vec![Vec::<ParamUse>::new(); dims.na];
        for (side, route) in [(ModelSide::Act, &act_route), (ModelSide::Goal, &goal_route)] {
            for (a, uses) in usage.iter_mut().enumerate() {
                let mut by_param: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
                for c in 0..dims.nc {
                    for x in 0..dims.ni {
                        by_param.entry(route[dims.row(a, c, x)]).or_default().push((c, x));
                    }
                }
                uses.extend(by_param.into_iter().map(|(param, rows)| ParamUse { param, side, rows }));
            }
        }
        let mut model = Self {
            dims,
            entries,
            act_route,
            goal_route,
            usage,
            tables: Tables::zeros(dims),
        };
        model.tables = model.build_tables(&model.means());
        Ok(model)
    }

    pub fn entries(&self) -> &[MultinomialEntry] {
        &self.entries
    }

    pub fn act_entry(&self, a: usize, c: usize, next_intention: usize) -> &MultinomialEntry {
        &self.entries[self.act_route[self.dims.row(a, c, next_intention)]]
    }

    pub fn goal_entry(&self, a: usize, c: usize, intention: usize) -> &MultinomialEntry {
        &self.entries[self.goal_route[self.dims.row(a, c, intention)]]
    }

    fn means(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| e.params.mean_probs()).collect()
    }

    fn build_tables(&self, thetas: &[Vec<f64>]) -> Tables {
        let mut t = Tables::zeros(self.dims);
        for (side, route) in [(ModelSide::Act, &self.act_route), (ModelSide::Goal, &self.goal_route)] {
            for (row, &e) in route.iter().enumerate() {
                t.row_mut(side, row).copy_from_slice(&thetas[e]);
            }
        }
        t
    }
}

fn describe_key(vocab: &Vocabulary, side: ModelSide, group: &Group, key: &[usize]) -> String {
    let parts: Vec<String> = group
        .given
        .iter()
        .zip(key)
        .map(|(v, &val)| match v {
            GivenVar::Action => format!("a_m={}", vocab.actions[val].label),
            GivenVar::Intention => {
                let var = if side == ModelSide::Act { "i_u'" } else { "i_u" };
                format!("{var}={}", vocab.intentions[val])
            }
            GivenVar::Context(k) => format!("{}={}", vocab.context_vars[*k].name, vocab.context_vars[*k].values[val]),
        })
        .collect();
    format!("{}[{}]", group.name, parts.join(","))
}

// ---------------------------------------------------------------------------
// Rule model
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
enum Source {
    Param(usize),
    /// Probabilities of the listed effects followed by void (if any).
    Fixed(Vec<f64>),
    /// No effects: the case is void with probability 1.
    Void,
}

#[derive(Clone, Debug)]
struct Case {
    when: Condition,
    effects: Vec<LabelPattern>,
    effect_text: Vec<String>,
    source: Source,
    has_void: bool,
}

#[derive(Clone, Debug)]
struct Rule {
    name: String,
    side: ModelSide,
    cases: Vec<Case>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleParam {
    pub name: String,
    pub params: DirichletParams,
}

#[derive(Clone, Debug, PartialEq)]
enum GoalDefault {
    Persist,
    Probs(Vec<f64>),
}

/// A rule case firing on one row, with its effect values resolved.
#[derive(Clone, Debug)]
struct Fired {
    rule: usize,
    case: usize,
    values: Vec<usize>,
}

/// Ordered probabilistic rules over `a_u'` and `i_u'`.
#[derive(Clone, Debug)]
pub struct RuleModel {
    dims: Dims,
    rules: Vec<Rule>,
    params: Vec<RuleParam>,
    act_default: Vec<f64>,
    goal_default: GoalDefault,
    act_fired: Vec<Vec<Fired>>,
    goal_fired: Vec<Vec<Fired>>,
    usage: Vec<Vec<ParamUse>>,
    means: Vec<Vec<f64>>,
    tables: Tables,
}

fn act_default(decl: Option<&DefaultDecl>, vocab: &Vocabulary) -> Result<Vec<f64>> {
    let n = vocab.n_acts();
    match decl {
        None | Some(DefaultDecl::Named(DefaultName::Uniform)) => Ok(vec![1.0 / n as f64; n]),
        Some(DefaultDecl::Named(DefaultName::Persist)) => {
            Err(Error::Validation("act_default cannot be `persist`".into()))
        }
        Some(DefaultDecl::Probs(map)) => weights_from_map(map, &vocab.user_acts, "user act"),
    }
}

fn goal_default(decl: Option<&DefaultDecl>, vocab: &Vocabulary) -> Result<GoalDefault> {
    let n = vocab.n_intentions();
    match decl {
        None | Some(DefaultDecl::Named(DefaultName::Persist)) => Ok(GoalDefault::Persist),
        Some(DefaultDecl::Named(DefaultName::Uniform)) => Ok(GoalDefault::Probs(vec![1.0 / n as f64; n])),
        Some(DefaultDecl::Probs(map)) => Ok(GoalDefault::Probs(weights_from_map(map, &vocab.intentions, "intention")?)),
    }
}

pub(crate) fn weights_from_map(map: &BTreeMap<String, f64>, labels: &[String], kind: &'static str) -> Result<Vec<f64>> {
    let mut w = vec![0.0; labels.len()];
    for (label, &p) in map {
        let k = labels.iter().position(|l| l == label).ok_or_else(|| Error::UnknownLabel {
            kind,
            label: label.clone(),
        })?;
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::Validation(format!("weight for `{label}` must be nonnegative")));
        }
        w[k] = p;
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::Validation(format!("{kind} distribution has zero mass")));
    }
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Mixes fired rule outcomes into one output distribution.
///
/// Each component is `(values, probs)`; `probs` may carry one extra trailing
/// void probability. Non-void outcomes that agree give their value; distinct
/// assertions share the mass uniformly; all-void falls back to `default`.
fn combine(components: &[(&[usize], &[f64])], default: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    let mut asserted = Vec::with_capacity(components.len());
    combine_rec(components, 1.0, &mut asserted, default, out);
}

fn combine_rec(components: &[(&[usize], &[f64])], p: f64, asserted: &mut Vec<usize>, default: &[f64], out: &mut [f64]) {
    if p == 0.0 {
        return;
    }
    let Some(((values, probs), rest)) = components.split_first() else {
        if asserted.is_empty() {
            for (o, d) in out.iter_mut().zip(default) {
                *o += p * d;
            }
        } else {
            let distinct: Vec<usize> = asserted
                .iter()
                .enumerate()
                .filter(|(k, v)| !asserted[..*k].contains(v))
                .map(|(_, &v)| v)
                .collect();
            let share = p / distinct.len() as f64;
            for v in distinct {
                out[v] += share;
            }
        }
        return;
    };
    for (j, &q) in probs.iter().enumerate() {
        if let Some(&v) = values.get(j) {
            asserted.push(v);
            combine_rec(rest, p * q, asserted, default, out);
            asserted.pop();
        } else {
            combine_rec(rest, p * q, asserted, default, out);
        }
    }
}

/// Inputs shared by the learned rule model and the simulator's ground truth.
pub(crate) struct RuleSpec<'a> {
    pub act_default: Option<&'a DefaultDecl>,
    pub goal_default: Option<&'a DefaultDecl>,
    pub params: Option<&'a BTreeMap<String, Vec<f64>>>,
    pub rules: &'a [RuleDecl],
    pub prior_alpha: f64,
    pub fixed_only: bool,
}

impl RuleModel {
    pub fn from_domain(domain: &DomainSpec) -> Result<Self> {
        let cfg = &domain.file().model_config;
        let decl = cfg
            .rules
            .as_ref()
            .ok_or_else(|| Error::Config("domain has no rule model".into()))?;
        Self::compile(
            domain.vocab(),
            &RuleSpec {
                act_default: decl.act_default.as_ref(),
                goal_default: decl.goal_default.as_ref(),
                params: Some(&decl.params),
                rules: &decl.rules,
                prior_alpha: cfg.prior_alpha,
                fixed_only: false,
            },
        )
    }

    pub(crate) fn compile(vocab: &Vocabulary, spec: &RuleSpec) -> Result<Self> {
        let dims = Dims::of(vocab);
        let mut params: Vec<RuleParam> = Vec::new();
        let mut rules = Vec::new();
        let mut names = std::collections::HashSet::new();
        for decl in spec.rules {
            if !names.insert(decl.name.as_str()) {
                return Err(Error::Validation(format!("duplicate rule name `{}`", decl.name)));
            }
            rules.push(compile_rule(decl, vocab, spec, &mut params)?);
        }
        if let Some(explicit) = spec.params {
            for (name, alphas) in explicit {
                let p = params.iter_mut().find(|p| p.name == *name).ok_or_else(|| {
                    Error::Validation(format!("prior given for unknown rule parameter `{name}`"))
                })?;
                if alphas.len() != p.params.len() {
                    return Err(Error::Validation(format!(
                        "parameter `{name}` has {} categories, prior lists {}",
                        p.params.len(),
                        alphas.len()
                    )));
                }
                p.params = DirichletParams::new(alphas.clone(), p.params.labels().to_vec())?;
            }
        }
        let mut model = Self {
            dims,
            rules,
            params,
            act_default: act_default(spec.act_default, vocab)?,
            goal_default: goal_default(spec.goal_default, vocab)?,
            act_fired: Vec::new(),
            goal_fired: Vec::new(),
            usage: vec![Vec::new(); dims.na],
            means: Vec::new(),
            tables: Tables::zeros(dims),
        };
        model.act_fired = model.fire_rows(vocab, ModelSide::Act)?;
        model.goal_fired = model.fire_rows(vocab, ModelSide::Goal)?;
        model.build_usage();
        model.refresh();
        Ok(model)
    }

    fn fire_rows(&self, vocab: &Vocabulary, side: ModelSide) -> Result<Vec<Vec<Fired>>> {
        let dims = self.dims;
        let labels = output_labels(vocab, side);
        let mut out = Vec::with_capacity(dims.na * dims.nc * dims.ni);
        for a in 0..dims.na {
            for c in 0..dims.nc {
                let context = vocab.context_assignment(c);
                for x in 0..dims.ni {
                    let env = row_env(side, a, x, &context);
                    let mut fired = Vec::new();
                    for (r, rule) in self.rules.iter().enumerate().filter(|(_, r)| r.side == side) {
                        let hit = rule
                            .cases
                            .iter()
                            .enumerate()
                            .find_map(|(k, case)| case.when.find_binding(vocab, &env).map(|b| (k, b)));
                        let Some((k, binding)) = hit else { continue };
                        let case = &rule.cases[k];
                        let values = case
                            .effects
                            .iter()
                            .zip(&case.effect_text)
                            .map(|(pat, text)| {
                                let label = pat
                                    .substitute(binding.map(|b| vocab.intentions[b].as_str()))
                                    .ok_or_else(|| {
                                        Error::Instantiation(format!("effect `{text}` of rule `{}` has no binding for X", rule.name))
                                    })?;
                                labels.iter().position(|l| *l == label).ok_or_else(|| {
                                    Error::Instantiation(format!(
                                        "effect `{text}` of rule `{}` resolves to unknown value `{label}`",
                                        rule.name
                                    ))
                                })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        fired.push(Fired { rule: r, case: k, values });
                    }
                    out.push(fired);
                }
            }
        }
        Ok(out)
    }

    fn build_usage(&mut self) {
        let dims = self.dims;
        let mut usage = vec![Vec::<ParamUse>::new(); dims.na];
        for (side, fired) in [(ModelSide::Act, &self.act_fired), (ModelSide::Goal, &self.goal_fired)] {
            for (a, uses) in usage.iter_mut().enumerate() {
                let mut by_param: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
                for c in 0..dims.nc {
                    for x in 0..dims.ni {
                        for f in &fired[dims.row(a, c, x)] {
                            if let Source::Param(k) = self.rules[f.rule].cases[f.case].source {
                                by_param.entry(k).or_default().push((c, x));
                            }
                        }
                    }
                }
                uses.extend(by_param.into_iter().map(|(param, rows)| ParamUse { param, side, rows }));
            }
        }
        for uses in &mut usage {
            uses.sort_by_key(|u| u.param);
        }
        self.usage = usage;
    }

    pub fn params(&self) -> &[RuleParam] {
        &self.params
    }

    pub(crate) fn mean_tables(&self) -> &Tables {
        &self.tables
    }

    pub fn rule_names(&self) -> Vec<&str> {
        self.rules.iter().map(|r| r.name.as_str()).collect()
    }

    fn refresh(&mut self) {
        self.means = self.params.iter().map(|p| p.params.mean_probs()).collect();
        self.tables = self.build_tables(&self.means);
    }

    fn default_row(&self, side: ModelSide, x: usize) -> std::borrow::Cow<'_, [f64]> {
        match (side, &self.goal_default) {
            (ModelSide::Act, _) => std::borrow::Cow::Borrowed(&self.act_default),
            (ModelSide::Goal, GoalDefault::Probs(p)) => std::borrow::Cow::Borrowed(p),
            (ModelSide::Goal, GoalDefault::Persist) => {
                let mut v = vec![0.0; self.dims.ni];
                v[x] = 1.0;
                std::borrow::Cow::Owned(v)
            }
        }
    }

    fn case_probs<'a>(&'a self, f: &Fired, thetas: &'a [Vec<f64>], over: Option<(usize, &'a [f64])>) -> &'a [f64] {
        match &self.rules[f.rule].cases[f.case].source {
            Source::Param(k) => match over {
                Some((o, theta)) if o == *k => theta,
                _ => &thetas[*k],
            },
            Source::Fixed(p) => p,
            Source::Void => &[1.0],
        }
    }

    fn compute_row(&self, side: ModelSide, row: usize, thetas: &[Vec<f64>], over: Option<(usize, &[f64])>, out: &mut [f64]) {
        let fired = match side {
            ModelSide::Act => &self.act_fired[row],
            ModelSide::Goal => &self.goal_fired[row],
        };
        let x = row % self.dims.ni;
        let default = self.default_row(side, x);
        let comps: Vec<(&[usize], &[f64])> = fired
            .iter()
            .map(|f| (f.values.as_slice(), self.case_probs(f, thetas, over)))
            .collect();
        combine(&comps, &default, out);
    }

    fn build_tables(&self, thetas: &[Vec<f64>]) -> Tables {
        let mut t = Tables::zeros(self.dims);
        let rows = self.dims.na * self.dims.nc * self.dims.ni;
        for side in [ModelSide::Act, ModelSide::Goal] {
            for row in 0..rows {
                let mut buf = vec![0.0; self.dims.out_len(side)];
                self.compute_row(side, row, thetas, None, &mut buf);
                t.row_mut(side, row).copy_from_slice(&buf);
            }
        }
        t
    }

    /// Human-readable listing of the rules with their current parameter means.
    pub fn pretty(&self) -> String {
        let mut s = String::new();
        for rule in &self.rules {
            let var = match rule.side {
                ModelSide::Act => "a_u'",
                ModelSide::Goal => "i_u'",
            };
            let _ = writeln!(s, "rule {} ({var}):", rule.name);
            for (k, case) in rule.cases.iter().enumerate() {
                let kw = if k == 0 { "if" } else { "elif" };
                let _ = writeln!(s, "  {kw} {}:", case.when.source());
                let probs: Vec<f64> = match &case.source {
                    Source::Param(p) => self.means[*p].clone(),
                    Source::Fixed(p) => p.clone(),
                    Source::Void => vec![1.0],
                };
                let tag = match &case.source {
                    Source::Param(p) => format!(" ~ {}", self.params[*p].name),
                    _ => String::new(),
                };
                for (j, text) in case.effect_text.iter().enumerate() {
                    let _ = writeln!(s, "    {text} : {:.4}{tag}", probs[j]);
                }
                if case.has_void {
                    let _ = writeln!(s, "    void : {:.4}{tag}", probs[case.effects.len()]);
                }
            }
            let _ = writeln!(s, "  else:\n    void : 1.0000");
        }
        s
    }
}

fn compile_rule(decl: &RuleDecl, vocab: &Vocabulary, spec: &RuleSpec, params: &mut Vec<RuleParam>) -> Result<Rule> {
    let mut side: Option<ModelSide> = None;
    let mut cases = Vec::new();
    for case in &decl.cases {
        let mut effects = Vec::new();
        for text in &case.effects {
            let (lhs, rhs) = split_assignment(text)?;
            let s = match lhs.as_str() {
                "a_u'" => ModelSide::Act,
                "i_u'" => ModelSide::Goal,
                other => {
                    return Err(Error::Instantiation(format!(
                        "effect `{text}` of rule `{}` writes unknown variable `{other}`",
                        decl.name
                    )))
                }
            };
            if *side.get_or_insert(s) != s {
                return Err(Error::Validation(format!("rule `{}` writes both a_u' and i_u'", decl.name)));
            }
            let pattern = LabelPattern::parse(rhs.trim_matches('\''));
            if pattern.has_wildcard() {
                return Err(Error::Validation(format!("effect `{text}` contains a wildcard")));
            }
            effects.push((pattern, text.clone()));
        }
        cases.push(effects);
    }
    let side = side.ok_or_else(|| Error::Validation(format!("rule `{}` has no effects", decl.name)))?;
    let scope = scope_of(side);
    let mut compiled = Vec::new();
    for (case, effects) in decl.cases.iter().zip(cases) {
        let when = parse_condition(case.when.as_deref(), vocab, scope)?;
        if effects.iter().any(|(p, _)| p.mentions_template()) && !when.uses_template() {
            return Err(Error::Instantiation(format!(
                "rule `{}` uses X in an effect but its condition does not bind X",
                decl.name
            )));
        }
        // Fail early on effects that can never resolve to a known value.
        for (pattern, text) in &effects {
            let labels = output_labels(vocab, side);
            let resolves = if pattern.mentions_template() {
                vocab.intentions.iter().any(|x| pattern.substitute(Some(x)).is_some_and(|l| labels.contains(&l)))
            } else {
                pattern.substitute(None).is_some_and(|l| labels.contains(&l))
            };
            if !resolves {
                return Err(Error::Instantiation(format!(
                    "effect `{text}` of rule `{}` names an unknown value",
                    decl.name
                )));
            }
        }
        let n = effects.len();
        let has_void = !case.exhaustive;
        let source = match (&case.param, &case.probs) {
            (Some(_), Some(_)) => {
                return Err(Error::Validation(format!("case of rule `{}` has both param and probs", decl.name)))
            }
            (Some(name), None) => {
                if spec.fixed_only {
                    return Err(Error::Validation(format!("simulator rule `{}` must use fixed probs", decl.name)));
                }
                if n == 0 {
                    return Err(Error::Validation(format!("parameter `{name}` has no effects")));
                }
                let arity = n + usize::from(has_void);
                if arity < 2 {
                    return Err(Error::Validation(format!("parameter `{name}` needs at least two outcomes")));
                }
                let mut labels: Vec<String> = effects.iter().map(|(_, t)| t.clone()).collect();
                if has_void {
                    labels.push("void".into());
                }
                let k = match params.iter().position(|p| p.name == *name) {
                    Some(k) if params[k].params.len() != arity => {
                        return Err(Error::Validation(format!("parameter `{name}` reused with a different arity")))
                    }
                    Some(k) => k,
                    None => {
                        params.push(RuleParam {
                            name: name.clone(),
                            params: DirichletParams::symmetric(spec.prior_alpha, labels)?,
                        });
                        params.len() - 1
                    }
                };
                Source::Param(k)
            }
            (None, Some(probs)) => {
                if probs.len() != n {
                    return Err(Error::Validation(format!(
                        "rule `{}` lists {} probabilities for {n} effects",
                        decl.name,
                        probs.len()
                    )));
                }
                if probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                    return Err(Error::Validation(format!("rule `{}` has a negative probability", decl.name)));
                }
                let total: f64 = probs.iter().sum();
                if total > 1.0 + 1e-9 || (!has_void && (total - 1.0).abs() > 1e-9) {
                    return Err(Error::Validation(format!(
                        "rule `{}` probabilities sum to {total}",
                        decl.name
                    )));
                }
                let mut p = probs.clone();
                if has_void {
                    p.push((1.0 - total).max(0.0));
                }
                Source::Fixed(p)
            }
            (None, None) if n == 0 => Source::Void,
            (None, None) => {
                return Err(Error::Validation(format!("case of rule `{}` needs param or probs", decl.name)))
            }
        };
        let (patterns, texts): (Vec<_>, Vec<_>) = effects.into_iter().unzip();
        compiled.push(Case {
            when,
            effects: patterns,
            effect_text: texts,
            has_void: has_void || matches!(source, Source::Void),
            source,
        });
    }
    Ok(Rule {
        name: decl.name.clone(),
        side,
        cases: compiled,
    })
}

// ---------------------------------------------------------------------------
// Common interface
// ---------------------------------------------------------------------------

/// A learned transition model.
#[derive(Clone, Debug)]
pub enum TransitionModel {
    Multinomial(MultinomialModel),
    Rules(RuleModel),
}

impl TransitionModel {
    pub fn from_domain(domain: &DomainSpec, kind: ModelType) -> Result<Self> {
        Ok(match kind {
            ModelType::Multinomial => Self::Multinomial(MultinomialModel::from_domain(domain)?),
            ModelType::Rules => Self::Rules(RuleModel::from_domain(domain)?),
        })
    }

    pub fn model_type(&self) -> ModelType {
        match self {
            Self::Multinomial(_) => ModelType::Multinomial,
            Self::Rules(_) => ModelType::Rules,
        }
    }

    pub fn dims(&self) -> Dims {
        self.tables().dims
    }

    /// Predictive tables at the Dirichlet means.
    pub fn tables(&self) -> &Tables {
        match self {
            Self::Multinomial(m) => &m.tables,
            Self::Rules(r) => &r.tables,
        }
    }

    /// Tables built from a single draw of every parameter vector.
    pub fn sample_tables<R: Rng + ?Sized>(&self, rng: &mut R) -> Tables {
        let thetas: Vec<Vec<f64>> = (0..self.parameter_count())
            .map(|k| self.param(k).sample(rng).probs().to_vec())
            .collect();
        match self {
            Self::Multinomial(m) => m.build_tables(&thetas),
            Self::Rules(r) => r.build_tables(&thetas),
        }
    }

    /// Number of Dirichlet parameter vectors.
    pub fn parameter_count(&self) -> usize {
        match self {
            Self::Multinomial(m) => m.entries.len(),
            Self::Rules(r) => r.params.len(),
        }
    }

    pub fn param(&self, k: usize) -> &DirichletParams {
        match self {
            Self::Multinomial(m) => &m.entries[k].params,
            Self::Rules(r) => &r.params[k].params,
        }
    }

    pub fn param_name(&self, k: usize) -> &str {
        match self {
            Self::Multinomial(m) => &m.entries[k].label,
            Self::Rules(r) => &r.params[k].name,
        }
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        (0..self.parameter_count()).find(|&k| self.param_name(k) == name)
    }

    /// Replaces several parameter vectors and rebuilds the mean tables once.
    pub fn set_params(&mut self, updates: Vec<(usize, DirichletParams)>) -> Result<()> {
        for (k, p) in updates {
            let slot = match self {
                Self::Multinomial(m) => &mut m.entries[k].params,
                Self::Rules(r) => &mut r.params[k].params,
            };
            if slot.len() != p.len() {
                return Err(Error::Config(format!("parameter {k} has {} categories, got {}", slot.len(), p.len())));
            }
            *slot = p;
        }
        match self {
            Self::Multinomial(m) => m.tables = m.build_tables(&m.means()),
            Self::Rules(r) => r.refresh(),
        }
        Ok(())
    }

    /// Parameter vectors used under machine action `a`, with their rows.
    pub fn param_usage(&self, a: usize) -> &[ParamUse] {
        match self {
            Self::Multinomial(m) => &m.usage[a],
            Self::Rules(r) => &r.usage[a],
        }
    }

    /// One table row with parameter `k` replaced by `theta` and every other
    /// parameter at its mean.
    pub fn row_with(&self, side: ModelSide, a: usize, c: usize, x: usize, k: usize, theta: &[f64], out: &mut [f64]) {
        match self {
            Self::Multinomial(m) => {
                let route = match side {
                    ModelSide::Act => &m.act_route,
                    ModelSide::Goal => &m.goal_route,
                };
                let row = m.dims.row(a, c, x);
                if route[row] == k {
                    out.copy_from_slice(theta);
                } else {
                    let t = &m.tables;
                    out.copy_from_slice(match side {
                        ModelSide::Act => t.act_row(a, c, x),
                        ModelSide::Goal => t.goal_row(a, c, x),
                    });
                }
            }
            Self::Rules(r) => r.compute_row(side, r.dims.row(a, c, x), &r.means, Some((k, theta)), out),
        }
    }

    /// Marginal over the next user act under belief `b` and action `a_m`.
    pub fn predict_user_act<R: Rng + ?Sized>(
        &self,
        vocab: &Vocabulary,
        belief: &BeliefState,
        action: usize,
        mode: ParamMode,
        rng: &mut R,
    ) -> Result<Distribution> {
        let sampled;
        let tables = match mode {
            ParamMode::Mean => self.tables(),
            ParamMode::Sample => {
                sampled = self.sample_tables(rng);
                &sampled
            }
        };
        let predicted = tables.predict_intentions(belief.probs(), action);
        Distribution::from_weights(vocab.user_acts.clone(), tables.act_marginal(&predicted, action))
    }

    /// Bayesian network for one turn: the belief over `(c, i_u)`, the next
    /// intention `i_u'` and the next act `a_u'` under machine action `a_m`.
    /// Rule models add one node per rule between the inputs and the output.
    pub fn instantiate(&self, vocab: &Vocabulary, belief: &BeliefState, action: usize) -> Result<Network> {
        let dims = self.dims();
        let mut b = belief.network_builder(vocab)?;
        let ctx_names: Vec<&str> = vocab.context_vars.iter().map(|c| c.name.as_str()).collect();
        b.variable_owned("i_u'", vocab.intentions.clone())?;
        b.variable_owned("a_u'", vocab.user_acts.clone())?;
        for k in 0..self.parameter_count() {
            b.parameter(self.param_name(k), self.param(k).clone());
        }
        let mut parents_i: Vec<&str> = vec!["i_u"];
        parents_i.extend(&ctx_names);
        let mut parents_ip: Vec<&str> = vec!["i_u'"];
        parents_ip.extend(&ctx_names);
        let t = self.tables();
        let goal_cpt = |b: &mut NetworkBuilder| -> Result<()> {
            let mut table = Vec::with_capacity(dims.ni * dims.nc * dims.ni);
            for i in 0..dims.ni {
                for c in 0..dims.nc {
                    table.extend_from_slice(t.goal_row(action, c, i));
                }
            }
            b.cpt("i_u'", &parents_i, table)?;
            Ok(())
        };
        let act_cpt = |b: &mut NetworkBuilder| -> Result<()> {
            let mut table = Vec::with_capacity(dims.ni * dims.nc * dims.nu);
            for ip in 0..dims.ni {
                for c in 0..dims.nc {
                    table.extend_from_slice(t.act_row(action, c, ip));
                }
            }
            b.cpt("a_u'", &parents_ip, table)?;
            Ok(())
        };
        match self {
            Self::Multinomial(_) => {
                goal_cpt(&mut b)?;
                act_cpt(&mut b)?;
            }
            Self::Rules(r) => {
                for side in [ModelSide::Act, ModelSide::Goal] {
                    let rules: Vec<usize> = (0..r.rules.len()).filter(|&k| r.rules[k].side == side).collect();
                    let (output, inputs, labels) = match side {
                        ModelSide::Act => ("a_u'", &parents_ip, &vocab.user_acts),
                        ModelSide::Goal => ("i_u'", &parents_i, &vocab.intentions),
                    };
                    if rules.is_empty() {
                        match side {
                            ModelSide::Act => act_cpt(&mut b)?,
                            ModelSide::Goal => goal_cpt(&mut b)?,
                        }
                        continue;
                    }
                    let n_out = labels.len();
                    let mut node_names = Vec::new();
                    for &k in &rules {
                        let name = format!("rule:{}", r.rules[k].name);
                        let mut values = labels.clone();
                        values.push("void".into());
                        b.variable_owned(&name, values)?;
                        let mut table = Vec::with_capacity(dims.ni * dims.nc * (n_out + 1));
                        for x in 0..dims.ni {
                            for c in 0..dims.nc {
                                let mut row = vec![0.0; n_out + 1];
                                let fired = match side {
                                    ModelSide::Act => &r.act_fired[dims.row(action, c, x)],
                                    ModelSide::Goal => &r.goal_fired[dims.row(action, c, x)],
                                };
                                match fired.iter().find(|f| f.rule == k) {
                                    Some(f) => {
                                        let probs = r.case_probs(f, &r.means, None);
                                        for (j, &q) in probs.iter().enumerate() {
                                            row[f.values.get(j).copied().unwrap_or(n_out)] += q;
                                        }
                                    }
                                    None => row[n_out] = 1.0,
                                }
                                table.extend(row);
                            }
                        }
                        b.cpt(&name, inputs, table)?;
                        node_names.push(name);
                    }
                    // Output node: child of the rule nodes (and of i_u for goal defaults).
                    let mut parents: Vec<&str> = node_names.iter().map(String::as_str).collect();
                    if side == ModelSide::Goal {
                        parents.push("i_u");
                    }
                    let n_rows = (n_out + 1).pow(rules.len() as u32) * if side == ModelSide::Goal { dims.ni } else { 1 };
                    if n_rows.saturating_mul(n_out) > MAX_CPT_ENTRIES {
                        return Err(Error::Instantiation(format!("{output} table exceeds {MAX_CPT_ENTRIES} entries")));
                    }
                    let mut table = Vec::with_capacity(n_rows * n_out);
                    let mut digits = vec![0usize; parents.len()];
                    for mut row in 0..n_rows {
                        for (d, p) in digits.iter_mut().zip(&parents).rev() {
                            let card = if *p == "i_u" { dims.ni } else { n_out + 1 };
                            *d = row % card;
                            row /= card;
                        }
                        let asserted: Vec<usize> = digits[..rules.len()].iter().copied().filter(|&v| v < n_out).collect();
                        let mut out = vec![0.0; n_out];
                        if asserted.is_empty() {
                            let x = if side == ModelSide::Goal { digits[rules.len()] } else { 0 };
                            out.copy_from_slice(&r.default_row(side, x));
                        } else {
                            let comps: Vec<(&[usize], &[f64])> = asserted.iter().map(|v| (std::slice::from_ref(v), &[1.0][..])).collect();
                            combine(&comps, &vec![0.0; n_out], &mut out);
                        }
                        table.extend(out);
                    }
                    b.cpt(output, &parents, table)?;
                }
            }
        }
        b.build()
    }

    pub fn pretty(&self) -> String {
        match self {
            Self::Rules(r) => r.pretty(),
            Self::Multinomial(m) => {
                let mut s = String::new();
                for e in &m.entries {
                    let alphas: Vec<String> = e.params.alphas().iter().map(|a| format!("{a:.3}")).collect();
                    let _ = writeln!(s, "{} {}: [{}]", side_name(e.side), e.label, alphas.join(", "));
                }
                s
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_single_rule_with_void() {
        let mut out = vec![0.0; 3];
        combine(&[(&[1], &[0.6, 0.4])], &[0.5, 0.25, 0.25], &mut out);
        assert_eq!(out, vec![0.2, 0.7, 0.1]);
    }

    #[test]
    fn combine_conflicting_rules_split() {
        let mut out = vec![0.0; 2];
        combine(&[(&[0], &[1.0]), (&[1], &[1.0])], &[1.0, 0.0], &mut out);
        assert_eq!(out, vec![0.5, 0.5]);
        combine(&[(&[0], &[1.0]), (&[0], &[1.0])], &[0.0, 1.0], &mut out);
        assert_eq!(out, vec![1.0, 0.0]);
    }

    #[test]
    fn combine_without_rules_is_default() {
        let mut out = vec![0.0; 2];
        combine(&[], &[0.3, 0.7], &mut out);
        assert_eq!(out, vec![0.3, 0.7]);
    }

    #[test]
    fn model_type_parses() {
        assert_eq!("rules".parse::<ModelType>().unwrap(), ModelType::Rules);
        assert!("flat".parse::<ModelType>().is_err());
    }
}
