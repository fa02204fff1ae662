//! Discrete Bayesian networks with exact enumeration and likelihood-weighting
//! inference.
//!
//! A [`Network`] is an immutable DAG of finite variables, one conditional
//! probability table per variable. Evidence is either hard (a clamped value)
//! or soft (a likelihood vector over the variable's values, the form an
//! N-best list takes for the user-act variable).

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dirichlet::DirichletParams;
use crate::error::{Error, Result};

/// Tolerance used for every normalization check in the crate.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Joint supports above this size are refused by exact enumeration.
pub const EXACT_SUPPORT_LIMIT: u128 = 100_000;

/// A categorical distribution over labelled outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    support: Vec<String>,
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(support: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(Error::Distribution(format!(
                "{} labels but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        if support.is_empty() {
            return Err(Error::Distribution("empty support".into()));
        }
        let mut seen = HashSet::new();
        for label in &support {
            if !seen.insert(label.as_str()) {
                return Err(Error::Distribution(format!("duplicate label `{label}`")));
            }
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::Distribution(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Distribution(format!("probabilities sum to {total}")));
        }
        Ok(Self { support, probs })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(support: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Distribution(format!("weights sum to {total}")));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Self::new(support, probs)
    }

    pub fn uniform(support: Vec<String>) -> Result<Self> {
        let n = support.len().max(1) as f64;
        let probs = vec![1.0 / n; support.len()];
        Self::new(support, probs)
    }

    pub fn support(&self) -> &[String] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, label: &str) -> Option<f64> {
        self.support
            .iter()
            .position(|l| l == label)
            .map(|i| self.probs[i])
    }

    /// Index of the most probable outcome; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn total_variation(&self, other: &Distribution) -> Result<f64> {
        if self.support != other.support {
            return Err(Error::Distribution("mismatched support".into()));
        }
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }
}

/// A finite random variable.
#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub values: Vec<String>,
}

impl Variable {
    pub fn card(&self) -> usize {
        self.values.len()
    }
}

/// Conditional probability table: one row per parent assignment (first
/// parent most significant), each row a distribution over the child.
#[derive(Clone, Debug, PartialEq)]
pub struct Cpt {
    pub child: usize,
    pub parents: Vec<usize>,
    pub table: Vec<f64>,
}

/// Evidence on a single variable.
#[derive(Clone, Debug, PartialEq)]
pub enum Evidence {
    /// The variable is observed to take this value.
    Hard(String),
    /// Likelihood of the observation for each value, in declaration order.
    Soft(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InferenceMethod {
    Exact,
    Sampling { n_samples: usize },
}

/// Result of likelihood weighting, with the Kish effective sample size.
#[derive(Clone, Debug)]
pub struct WeightedEstimate {
    pub distribution: Distribution,
    pub effective_samples: f64,
}

#[derive(Default)]
pub struct NetworkBuilder {
    variables: Vec<Variable>,
    index: HashMap<String, usize>,
    cpts: Vec<(String, Vec<String>, Vec<f64>)>,
    parameters: Vec<(String, DirichletParams)>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn variable(&mut self, name: &str, values: &[&str]) -> Result<&mut Self> {
        self.variable_owned(name, values.iter().map(|v| v.to_string()).collect())
    }

    pub fn variable_owned(&mut self, name: &str, values: Vec<String>) -> Result<&mut Self> {
        if self.index.contains_key(name) {
            return Err(Error::Network(format!("duplicate variable `{name}`")));
        }
        if values.is_empty() {
            return Err(Error::Network(format!("variable `{name}` has no values")));
        }
        let distinct: HashSet<&String> = values.iter().collect();
        if distinct.len() != values.len() {
            return Err(Error::Network(format!("variable `{name}` repeats a value")));
        }
        self.index.insert(name.to_string(), self.variables.len());
        self.variables.push(Variable {
            name: name.to_string(),
            values,
        });
        Ok(self)
    }

    /// Adds the CPT of `child`. CPTs may be added in any order.
    pub fn cpt(&mut self, child: &str, parents: &[&str], table: Vec<f64>) -> Result<&mut Self> {
        self.cpts.push((
            child.to_string(),
            parents.iter().map(|p| p.to_string()).collect(),
            table,
        ));
        Ok(self)
    }

    /// Attaches a parameter node carrying Dirichlet pseudo-counts.
    pub fn parameter(&mut self, name: &str, params: DirichletParams) -> &mut Self {
        self.parameters.push((name.to_string(), params));
        self
    }

    pub fn build(&self) -> Result<Network> {
        let n = self.variables.len();
        let mut cpts: Vec<Option<Cpt>> = vec![None; n];
        for (child, parents, table) in &self.cpts {
            let c = *self
                .index
                .get(child)
                .ok_or_else(|| Error::Network(format!("CPT for unknown variable `{child}`")))?;
            if cpts[c].is_some() {
                return Err(Error::Network(format!("two CPTs for `{child}`")));
            }
            let mut parent_ids = Vec::with_capacity(parents.len());
            for p in parents {
                let id = *self.index.get(p).ok_or_else(|| {
                    Error::Network(format!("CPT of `{child}` references unknown parent `{p}`"))
                })?;
                if parent_ids.contains(&id) || id == c {
                    return Err(Error::Network(format!("bad parent `{p}` for `{child}`")));
                }
                parent_ids.push(id);
            }
            let rows: usize = parent_ids.iter().map(|&p| self.variables[p].card()).product();
            let card = self.variables[c].card();
            if table.len() != rows * card {
                return Err(Error::Network(format!(
                    "CPT of `{child}` has {} entries, expected {}",
                    table.len(),
                    rows * card
                )));
            }
            for (r, row) in table.chunks(card).enumerate() {
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::Network(format!("CPT of `{child}` row {r} has a negative entry")));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > NORMALIZATION_TOLERANCE {
                    return Err(Error::Network(format!("CPT of `{child}` row {r} sums to {s}")));
                }
            }
            cpts[c] = Some(Cpt {
                child: c,
                parents: parent_ids,
                table: table.clone(),
            });
        }
        let cpts: Vec<Cpt> = cpts
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                c.ok_or_else(|| {
                    Error::Network(format!("variable `{}` has no CPT", self.variables[i].name))
                })
            })
            .collect::<Result<_>>()?;
        let order = topological_order(&cpts)?;
        Ok(Network {
            variables: self.variables.clone(),
            index: self.index.clone(),
            cpts,
            order,
            clamped: vec![None; n],
            likelihood: vec![None; n],
            parameters: self.parameters.clone(),
        })
    }
}

fn topological_order(cpts: &[Cpt]) -> Result<Vec<usize>> {
    let n = cpts.len();
    let mut indegree = vec![0usize; n];
    let mut children = vec![Vec::new(); n];
    for cpt in cpts {
        indegree[cpt.child] = cpt.parents.len();
        for &p in &cpt.parents {
            children[p].push(cpt.child);
        }
    }
    // Lowest index first keeps the order independent of CPT insertion order.
    let mut ready: std::collections::BTreeSet<usize> =
        (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&v) = ready.iter().next() {
        ready.remove(&v);
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() != n {
        return Err(Error::Network("graph contains a cycle".into()));
    }
    Ok(order)
}

/// An immutable discrete Bayesian network, possibly with evidence folded in.
#[derive(Clone, Debug)]
pub struct Network {
    variables: Vec<Variable>,
    index: HashMap<String, usize>,
    cpts: Vec<Cpt>,
    order: Vec<usize>,
    clamped: Vec<Option<usize>>,
    likelihood: Vec<Option<Vec<f64>>>,
    parameters: Vec<(String, DirichletParams)>,
}

struct ResolvedEvidence {
    clamped: Vec<Option<usize>>,
    likelihood: Vec<Option<Vec<f64>>>,
}

impl Network {
    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.index.get(name).map(|&i| &self.variables[i])
    }

    pub fn cpt(&self, name: &str) -> Option<&Cpt> {
        self.index.get(name).map(|&i| &self.cpts[i])
    }

    pub fn parameters(&self) -> &[(String, DirichletParams)] {
        &self.parameters
    }

    fn var_id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    fn resolve(&self, evidence: &[(&str, Evidence)]) -> Result<ResolvedEvidence> {
        let mut clamped = self.clamped.clone();
        let mut likelihood = self.likelihood.clone();
        for (name, ev) in evidence {
            let v = self.var_id(name)?;
            let var = &self.variables[v];
            match ev {
                Evidence::Hard(value) => {
                    let idx = var.values.iter().position(|x| x == value).ok_or_else(|| {
                        Error::UnknownLabel {
                            kind: "value",
                            label: format!("{}={}", name, value),
                        }
                    })?;
                    if matches!(clamped[v], Some(prev) if prev != idx) {
                        return Err(Error::ZeroProbabilityEvidence);
                    }
                    clamped[v] = Some(idx);
                }
                Evidence::Soft(weights) => {
                    if weights.len() != var.card() {
                        return Err(Error::Network(format!(
                            "soft evidence on `{name}` has {} weights, expected {}",
                            weights.len(),
                            var.card()
                        )));
                    }
                    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                        return Err(Error::Network(format!("negative soft evidence on `{name}`")));
                    }
                    likelihood[v] = Some(match likelihood[v].take() {
                        Some(prev) => prev.iter().zip(weights).map(|(a, b)| a * b).collect(),
                        None => weights.clone(),
                    });
                }
            }
        }
        Ok(ResolvedEvidence {
            clamped,
            likelihood,
        })
    }

    /// Folds evidence into the network so later queries condition on it.
    pub fn apply_evidence(&self, evidence: &[(&str, Evidence)]) -> Result<Network> {
        let resolved = self.resolve(evidence)?;
        let mut net = self.clone();
        net.clamped = resolved.clamped;
        net.likelihood = resolved.likelihood;
        Ok(net)
    }

    fn row_index(&self, cpt: &Cpt, assignment: &[usize]) -> usize {
        let mut row = 0;
        for &p in &cpt.parents {
            row = row * self.variables[p].card() + assignment[p];
        }
        row
    }

    fn local_prob(&self, v: usize, assignment: &[usize]) -> f64 {
        let cpt = &self.cpts[v];
        let card = self.variables[v].card();
        cpt.table[self.row_index(cpt, assignment) * card + assignment[v]]
    }

    fn query_layout(&self, query: &[&str]) -> Result<(Vec<usize>, Vec<String>)> {
        if query.is_empty() {
            return Err(Error::Network("empty query".into()));
        }
        let ids: Vec<usize> = query.iter().map(|q| self.var_id(q)).collect::<Result<_>>()?;
        let mut labels = vec![String::new()];
        for &id in &ids {
            let mut next = Vec::new();
            for prefix in &labels {
                for value in &self.variables[id].values {
                    next.push(if prefix.is_empty() {
                        value.clone()
                    } else {
                        format!("{prefix},{value}")
                    });
                }
            }
            labels = next;
        }
        Ok((ids, labels))
    }

    fn query_index(&self, ids: &[usize], assignment: &[usize]) -> usize {
        ids.iter()
            .fold(0, |acc, &id| acc * self.variables[id].card() + assignment[id])
    }

    /// Number of joint states exact enumeration would visit.
    pub fn enumeration_size(&self) -> u128 {
        self.variables
            .iter()
            .zip(&self.clamped)
            .map(|(v, c)| if c.is_some() { 1 } else { v.card() as u128 })
            .product()
    }

    pub fn exact_marginal(&self, query: &[&str], evidence: &[(&str, Evidence)]) -> Result<Distribution> {
        let ev = self.resolve(evidence)?;
        let (ids, labels) = self.query_layout(query)?;
        let size: u128 = self
            .variables
            .iter()
            .zip(&ev.clamped)
            .map(|(v, c)| if c.is_some() { 1 } else { v.card() as u128 })
            .product();
        if size > EXACT_SUPPORT_LIMIT {
            return Err(Error::SupportTooLarge(size));
        }
        let mut acc = vec![0.0; labels.len()];
        let mut assignment = vec![0usize; self.variables.len()];
        self.enumerate(0, 1.0, &ev, &mut assignment, &mut |a, w| {
            acc[self.query_index(&ids, a)] += w;
        });
        Distribution::from_weights(labels, acc).map_err(|_| Error::ZeroProbabilityEvidence)
    }

    fn enumerate(
        &self,
        depth: usize,
        weight: f64,
        ev: &ResolvedEvidence,
        assignment: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize], f64),
    ) {
        if depth == self.order.len() {
            visit(assignment, weight);
            return;
        }
        let v = self.order[depth];
        let values: Vec<usize> = match ev.clamped[v] {
            Some(x) => vec![x],
            None => (0..self.variables[v].card()).collect(),
        };
        for x in values {
            assignment[v] = x;
            let mut w = weight * self.local_prob(v, assignment);
            if let Some(l) = &ev.likelihood[v] {
                w *= l[x];
            }
            if w > 0.0 {
                self.enumerate(depth + 1, w, ev, assignment, visit);
            }
        }
    }

    /// Likelihood weighting with the prior (topological) ordering as proposal.
    pub fn likelihood_weighting<R: Rng + ?Sized>(
        &self,
        query: &[&str],
        evidence: &[(&str, Evidence)],
        n_samples: usize,
        rng: &mut R,
    ) -> Result<WeightedEstimate> {
        if n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        let ev = self.resolve(evidence)?;
        let (ids, labels) = self.query_layout(query)?;
        let mut acc = vec![0.0; labels.len()];
        let mut sum_w = 0.0;
        let mut sum_w2 = 0.0;
        let mut assignment = vec![0usize; self.variables.len()];
        for _ in 0..n_samples {
            let mut w = 1.0;
            for &v in &self.order {
                let cpt = &self.cpts[v];
                let card = self.variables[v].card();
                let row = self.row_index(cpt, &assignment) * card;
                let probs = &cpt.table[row..row + card];
                match ev.clamped[v] {
                    Some(x) => {
                        assignment[v] = x;
                        w *= probs[x];
                    }
                    None => {
                        assignment[v] = sample_index(probs, rng);
                    }
                }
                if let Some(l) = &ev.likelihood[v] {
                    w *= l[assignment[v]];
                }
                if w == 0.0 {
                    break;
                }
            }
            if w > 0.0 {
                acc[self.query_index(&ids, &assignment)] += w;
                sum_w += w;
                sum_w2 += w * w;
            }
        }
        if sum_w <= 0.0 {
            return Err(Error::ZeroProbabilityEvidence);
        }
        let distribution = Distribution::from_weights(labels, acc)?;
        Ok(WeightedEstimate {
            distribution,
            effective_samples: sum_w * sum_w / sum_w2,
        })
    }

    pub fn query_marginal<R: Rng + ?Sized>(
        &self,
        query: &[&str],
        evidence: &[(&str, Evidence)],
        method: InferenceMethod,
        rng: &mut R,
    ) -> Result<Distribution> {
        match method {
            InferenceMethod::Exact => self.exact_marginal(query, evidence),
            InferenceMethod::Sampling { n_samples } => self
                .likelihood_weighting(query, evidence, n_samples, rng)
                .map(|e| e.distribution),
        }
    }

    /// Plain-text rendering used by golden tests and debugging.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for &v in &self.order {
            let var = &self.variables[v];
            let cpt = &self.cpts[v];
            let parents: Vec<&str> = cpt.parents.iter().map(|&p| self.variables[p].name.as_str()).collect();
            let _ = writeln!(out, "{} [{}] | {}", var.name, var.values.join(" "), parents.join(" "));
            for row in cpt.table.chunks(var.card()) {
                let cells: Vec<String> = row.iter().map(|p| format!("{p:.4}")).collect();
                let _ = writeln!(out, "  {}", cells.join(" "));
            }
            if let Some(x) = self.clamped[v] {
                let _ = writeln!(out, "  evidence = {}", var.values[x]);
            }
            if let Some(l) = &self.likelihood[v] {
                let cells: Vec<String> = l.iter().map(|p| format!("{p:.4}")).collect();
                let _ = writeln!(out, "  likelihood = {}", cells.join(" "));
            }
        }
        for (name, params) in &self.parameters {
            let _ = writeln!(out, "param {name} {:?}", params.alphas());
        }
        out
    }
}

/// Draws an index from unnormalized nonnegative weights.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain_identity() -> Network {
        let mut b = NetworkBuilder::new();
        b.variable("X", &["a", "b"]).unwrap();
        b.variable("Y", &["a", "b"]).unwrap();
        b.cpt("X", &[], vec![0.3, 0.7]).unwrap();
        b.cpt("Y", &["X"], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn deterministic_chain_pins_parent() {
        let net = chain_identity();
        let d = net
            .exact_marginal(&["X"], &[("Y", Evidence::Hard("b".into()))])
            .unwrap();
        assert_eq!(d.prob("b"), Some(1.0));
    }

    #[test]
    fn root_prior_recovered_without_evidence() {
        let mut b = NetworkBuilder::new();
        b.variable("R", &["x", "y"]).unwrap();
        b.cpt("R", &[], vec![0.2, 0.8]).unwrap();
        let d = b.build().unwrap().exact_marginal(&["R"], &[]).unwrap();
        assert!((d.probs()[0] - 0.2).abs() < 1e-12);
        assert!((d.probs()[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn hard_evidence_on_leaf_is_bayes_rule() {
        // P(X=a)=0.3, P(Y=a|X=a)=0.9, P(Y=a|X=b)=0.2
        // P(X=a|Y=a) = 0.27 / (0.27 + 0.14)
        let mut b = NetworkBuilder::new();
        b.variable("X", &["a", "b"]).unwrap();
        b.variable("Y", &["a", "b"]).unwrap();
        b.cpt("X", &[], vec![0.3, 0.7]).unwrap();
        b.cpt("Y", &["X"], vec![0.9, 0.1, 0.2, 0.8]).unwrap();
        let net = b.build().unwrap().apply_evidence(&[("Y", Evidence::Hard("a".into()))]).unwrap();
        let d = net.exact_marginal(&["X"], &[]).unwrap();
        assert!((d.probs()[0] - 0.27 / 0.41).abs() < 1e-12);
    }

    #[test]
    fn soft_evidence_behaves_as_likelihood() {
        let mut b = NetworkBuilder::new();
        b.variable("R", &["x", "y"]).unwrap();
        b.cpt("R", &[], vec![0.5, 0.5]).unwrap();
        let net = b.build().unwrap();
        let flat = net.apply_evidence(&[("R", Evidence::Soft(vec![0.4, 0.4]))]).unwrap();
        let d = flat.exact_marginal(&["R"], &[]).unwrap();
        assert!((d.probs()[0] - 0.5).abs() < 1e-12);
        let skewed = net.apply_evidence(&[("R", Evidence::Soft(vec![0.8, 0.2]))]).unwrap();
        let d = skewed.exact_marginal(&["R"], &[]).unwrap();
        assert!((d.probs()[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_evidence_is_an_error() {
        let net = chain_identity();
        let err = net
            .apply_evidence(&[("X", Evidence::Hard("a".into())), ("Y", Evidence::Hard("b".into()))])
            .unwrap()
            .exact_marginal(&["X"], &[])
            .unwrap_err();
        assert!(matches!(err, Error::ZeroProbabilityEvidence));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = net
            .likelihood_weighting(
                &["X"],
                &[("X", Evidence::Hard("a".into())), ("Y", Evidence::Hard("b".into()))],
                100,
                &mut rng,
            )
            .unwrap_err();
        assert!(matches!(err, Error::ZeroProbabilityEvidence));
    }

    #[test]
    fn unknown_variable_in_evidence() {
        let err = chain_identity()
            .apply_evidence(&[("Z", Evidence::Hard("a".into()))])
            .unwrap_err();
        assert!(matches!(err, Error::UnknownVariable(_)));
    }

    #[test]
    fn structural_validation() {
        let mut b = NetworkBuilder::new();
        b.variable("A", &["0", "1"]).unwrap();
        b.variable("B", &["0", "1"]).unwrap();
        b.cpt("A", &["B"], vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        b.cpt("B", &["A"], vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!(matches!(b.build(), Err(Error::Network(_))));

        let mut b = NetworkBuilder::new();
        b.variable("A", &["0", "1"]).unwrap();
        b.cpt("A", &[], vec![0.5, 0.6]).unwrap();
        assert!(matches!(b.build(), Err(Error::Network(_))));

        let mut b = NetworkBuilder::new();
        b.variable("A", &["0", "1"]).unwrap();
        b.cpt("A", &["Q"], vec![0.5, 0.5]).unwrap();
        assert!(matches!(b.build(), Err(Error::Network(_))));
    }

    #[test]
    fn three_node_sampling_matches_exact() {
        let mut b = NetworkBuilder::new();
        b.variable("A", &["0", "1"]).unwrap();
        b.variable("B", &["0", "1", "2"]).unwrap();
        b.variable("C", &["0", "1"]).unwrap();
        b.cpt("A", &[], vec![0.35, 0.65]).unwrap();
        b.cpt("B", &["A"], vec![0.2, 0.5, 0.3, 0.6, 0.1, 0.3]).unwrap();
        b.cpt("C", &["A", "B"], vec![0.9, 0.1, 0.4, 0.6, 0.5, 0.5, 0.2, 0.8, 0.7, 0.3, 0.05, 0.95])
            .unwrap();
        let net = b.build().unwrap();
        let evidence = [("C", Evidence::Hard("1".into()))];
        let exact = net.exact_marginal(&["A", "B"], &evidence).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let approx = net
            .query_marginal(&["A", "B"], &evidence, InferenceMethod::Sampling { n_samples: 100_000 }, &mut rng)
            .unwrap();
        assert!(exact.total_variation(&approx).unwrap() < 0.01);
    }

    #[test]
    fn dump_lists_every_variable() {
        let text = chain_identity().dump();
        assert_eq!(
            text,
            "X [a b] | \n  0.3000 0.7000\nY [a b] | X\n  1.0000 0.0000\n  0.0000 1.0000\n"
        );
    }
}
