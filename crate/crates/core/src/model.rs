//! Finite decision problems.
//!
//! A [`DecisionProblem`] carries a prior over a finite parameter set, a finite
//! action list, a reward table `u(theta, a)`, a discount factor and an
//! [`ObservationAutomaton`] that produces the observation law at each stage.
//! The automaton state only depends on the past actions, which is enough to
//! encode "information flows while a prescribed action sequence is followed".
//!
//! Nothing here normalizes input. Invariants are checked by
//! [`validate_problem`], which reports violations as data.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for "sums to one" checks.
pub const PROB_TOL: f64 = 1e-12;

/// Schema tag written into every serialized problem.
pub const PROBLEM_SCHEMA: &str = "expbound.problem.v1";

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    pub labels: Vec<String>,
    pub prior: Vec<f64>,
}

impl ParameterSpace {
    pub fn uniform(labels: Vec<String>) -> Self {
        let w = 1.0 / labels.len() as f64;
        let prior = vec![w; labels.len()];
        Self { labels, prior }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Finite-memory observation kernel driven by the action history.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationAutomaton {
    pub states: Vec<String>,
    pub start: usize,
    /// `transition[state][action]` is the next state.
    pub transition: Vec<Vec<usize>>,
    /// `emit[state][parameter]` is a distribution over observation symbols.
    pub emit: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionProblem {
    pub params: ParameterSpace,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    /// `reward[parameter][action]`.
    pub reward: Vec<Vec<f64>>,
    pub kernel: ObservationAutomaton,
    pub discount: f64,
}

impl DecisionProblem {
    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn action_index(&self, label: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == label)
    }

    pub fn observation_index(&self, label: &str) -> Option<usize> {
        self.observations.iter().position(|o| o == label)
    }

    pub fn param_index(&self, label: &str) -> Option<usize> {
        self.params.labels.iter().position(|o| o == label)
    }

    /// Emission row for `(state, parameter)`.
    #[inline]
    pub fn emission(&self, state: usize, param: usize) -> &[f64] {
        &self.kernel.emit[state][param]
    }

    #[inline]
    pub fn next_state(&self, state: usize, action: usize) -> usize {
        self.kernel.transition[state][action]
    }

    /// Fails with every violation joined into one message.
    pub fn ensure_valid(&self) -> Result<()> {
        let violations = validate_problem(self);
        if violations.is_empty() {
            Ok(())
        } else {
            let msg = violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::InvalidProblem(msg))
        }
    }

    pub fn to_json(&self) -> String {
        let doc = ProblemDocument::from(self);
        // Plain data with string keys cannot fail to serialize.
        serde_json::to_string_pretty(&doc).expect("problem document serializes")
    }

    /// Parses the JSON document. Structural defects (unknown labels, missing
    /// reward or transition entries) are errors; probabilistic invariants are
    /// left to [`validate_problem`].
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ProblemDocument = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        doc.try_into()
    }
}

/// Which invariant a [`Violation`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Invariant {
    NonEmpty,
    UniqueLabels,
    LabelCharset,
    Prior,
    RewardShape,
    RewardFinite,
    Discount,
    StartState,
    TransitionTotal,
    Emission,
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Invariant::NonEmpty => "non-empty",
            Invariant::UniqueLabels => "unique labels",
            Invariant::LabelCharset => "label charset",
            Invariant::Prior => "prior is a probability vector",
            Invariant::RewardShape => "reward table is total",
            Invariant::RewardFinite => "rewards are finite",
            Invariant::Discount => "discount in [0, 1)",
            Invariant::StartState => "start state exists",
            Invariant::TransitionTotal => "transition is total",
            Invariant::Emission => "emission is a probability vector",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: Invariant,
    pub location: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated at {}: {}", self.invariant, self.location, self.detail)
    }
}

fn distribution_defect(xs: &[f64]) -> Option<String> {
    if let Some((i, x)) = xs
        .iter()
        .enumerate()
        .find(|(_, x)| !x.is_finite() || **x < 0.0 || **x > 1.0)
    {
        return Some(format!("entry {i} = {x} outside [0, 1]"));
    }
    let sum: f64 = xs.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Some(format!("entries sum to {sum}"));
    }
    None
}

fn check_labels(kind: &str, labels: &[String], out: &mut Vec<Violation>) {
    if labels.is_empty() {
        out.push(Violation {
            invariant: Invariant::NonEmpty,
            location: kind.to_string(),
            detail: "no labels".into(),
        });
    }
    for (i, l) in labels.iter().enumerate() {
        if l.is_empty() || l.contains('/') {
            out.push(Violation {
                invariant: Invariant::LabelCharset,
                location: format!("{kind}[{i}]"),
                detail: format!("label {l:?} is empty or contains '/'"),
            });
        }
        if labels[..i].contains(l) {
            out.push(Violation {
                invariant: Invariant::UniqueLabels,
                location: format!("{kind}[{i}]"),
                detail: format!("duplicate label {l:?}"),
            });
        }
    }
}

/// Returns every violated invariant; an empty list means the problem is valid.
pub fn validate_problem(p: &DecisionProblem) -> Vec<Violation> {
    let mut out = Vec::new();
    check_labels("parameters", &p.params.labels, &mut out);
    check_labels("actions", &p.actions, &mut out);
    check_labels("observations", &p.observations, &mut out);
    check_labels("automaton.states", &p.kernel.states, &mut out);

    let (np, na, no, ns) = (
        p.num_params(),
        p.num_actions(),
        p.num_observations(),
        p.kernel.states.len(),
    );

    if p.params.prior.len() != np {
        out.push(Violation {
            invariant: Invariant::Prior,
            location: "prior".into(),
            detail: format!("{} weights for {np} parameters", p.params.prior.len()),
        });
    } else if let Some(d) = distribution_defect(&p.params.prior) {
        out.push(Violation {
            invariant: Invariant::Prior,
            location: "prior".into(),
            detail: d,
        });
    }

    if p.reward.len() != np {
        out.push(Violation {
            invariant: Invariant::RewardShape,
            location: "reward".into(),
            detail: format!("{} rows for {np} parameters", p.reward.len()),
        });
    }
    for (i, row) in p.reward.iter().enumerate() {
        let pl = p.params.labels.get(i).map(String::as_str).unwrap_or("?");
        if row.len() != na {
            out.push(Violation {
                invariant: Invariant::RewardShape,
                location: format!("reward[{pl}]"),
                detail: format!("{} entries for {na} actions", row.len()),
            });
        }
        for (j, r) in row.iter().enumerate() {
            if !r.is_finite() {
                let al = p.actions.get(j).map(String::as_str).unwrap_or("?");
                out.push(Violation {
                    invariant: Invariant::RewardFinite,
                    location: format!("reward[{pl}/{al}]"),
                    detail: format!("{r}"),
                });
            }
        }
    }

    if !(p.discount.is_finite() && (0.0..1.0).contains(&p.discount)) {
        out.push(Violation {
            invariant: Invariant::Discount,
            location: "discount".into(),
            detail: format!("{}", p.discount),
        });
    }

    let k = &p.kernel;
    if k.start >= ns {
        out.push(Violation {
            invariant: Invariant::StartState,
            location: "automaton.start".into(),
            detail: format!("index {} with {ns} states", k.start),
        });
    }
    if k.transition.len() != ns {
        out.push(Violation {
            invariant: Invariant::TransitionTotal,
            location: "automaton.transitions".into(),
            detail: format!("{} rows for {ns} states", k.transition.len()),
        });
    }
    for (s, row) in k.transition.iter().enumerate() {
        let sl = k.states.get(s).map(String::as_str).unwrap_or("?");
        if row.len() != na {
            out.push(Violation {
                invariant: Invariant::TransitionTotal,
                location: format!("automaton.transitions[{sl}]"),
                detail: format!("{} entries for {na} actions", row.len()),
            });
        }
        for (a, t) in row.iter().enumerate() {
            if *t >= ns {
                let al = p.actions.get(a).map(String::as_str).unwrap_or("?");
                out.push(Violation {
                    invariant: Invariant::TransitionTotal,
                    location: format!("automaton.transitions[{sl}/{al}]"),
                    detail: format!("target index {t} with {ns} states"),
                });
            }
        }
    }
    if k.emit.len() != ns {
        out.push(Violation {
            invariant: Invariant::Emission,
            location: "automaton.emissions".into(),
            detail: format!("{} rows for {ns} states", k.emit.len()),
        });
    }
    for (s, per_param) in k.emit.iter().enumerate() {
        let sl = k.states.get(s).map(String::as_str).unwrap_or("?");
        if per_param.len() != np {
            out.push(Violation {
                invariant: Invariant::Emission,
                location: format!("automaton.emissions[{sl}]"),
                detail: format!("{} rows for {np} parameters", per_param.len()),
            });
        }
        for (t, row) in per_param.iter().enumerate() {
            let pl = p.params.labels.get(t).map(String::as_str).unwrap_or("?");
            let location = format!("automaton.emissions[{sl}/{pl}]");
            if row.len() != no {
                out.push(Violation {
                    invariant: Invariant::Emission,
                    location,
                    detail: format!("{} entries for {no} observations", row.len()),
                });
            } else if let Some(d) = distribution_defect(row) {
                out.push(Violation {
                    invariant: Invariant::Emission,
                    location,
                    detail: d,
                });
            }
        }
    }
    out
}

/// `(E[max_a u(theta, a)], E[min_a u(theta, a)])` under the prior.
pub fn expected_extreme_rewards(p: &DecisionProblem) -> (f64, f64) {
    p.params
        .prior
        .iter()
        .zip(&p.reward)
        .fold((0.0, 0.0), |(hi, lo), (w, row)| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = row.iter().copied().fold(f64::INFINITY, f64::min);
            (hi + w * max, lo + w * min)
        })
}

/// A probability vector over the parameter labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    /// Checks the vector is a distribution; never rescales it.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidBelief("empty weight vector".into()));
        }
        match distribution_defect(&weights) {
            None => Ok(Self(weights)),
            Some(d) => Err(Error::InvalidBelief(d)),
        }
    }

    /// Explicit normalization of nonnegative weights.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidBelief(format!(
                "cannot normalize weights with total {total}"
            )));
        }
        Ok(Self(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut w = vec![0.0; n];
        w[at] = 1.0;
        Self(w)
    }

    pub fn prior_of(p: &DecisionProblem) -> Self {
        Self(p.params.prior.clone())
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_raw(weights: Vec<f64>) -> Self {
        Self(weights)
    }
}

// ---------------------------------------------------------------------------
// JSON document
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParametersDoc {
    labels: Vec<String>,
    prior: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AutomatonDoc {
    states: Vec<String>,
    start: String,
    /// `"state/action" -> state`
    transitions: BTreeMap<String, String>,
    /// `"state/parameter" -> {observation -> probability}`; absent symbols are 0.
    emissions: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemDocument {
    schema: String,
    parameters: ParametersDoc,
    actions: Vec<String>,
    observations: Vec<String>,
    /// `"parameter/action" -> reward`
    reward: BTreeMap<String, f64>,
    automaton: AutomatonDoc,
    discount: f64,
}

fn key(a: &str, b: &str) -> String {
    format!("{a}/{b}")
}

impl From<&DecisionProblem> for ProblemDocument {
    fn from(p: &DecisionProblem) -> Self {
        let labels = &p.params.labels;
        let prior = labels.iter().cloned().zip(p.params.prior.iter().copied()).collect();
        let mut reward = BTreeMap::new();
        for (pl, row) in labels.iter().zip(&p.reward) {
            for (al, r) in p.actions.iter().zip(row) {
                reward.insert(key(pl, al), *r);
            }
        }
        let k = &p.kernel;
        let mut transitions = BTreeMap::new();
        let mut emissions = BTreeMap::new();
        for (s, sl) in k.states.iter().enumerate() {
            for (a, al) in p.actions.iter().enumerate() {
                if let Some(t) = k.transition.get(s).and_then(|r| r.get(a)) {
                    if let Some(tl) = k.states.get(*t) {
                        transitions.insert(key(sl, al), tl.clone());
                    }
                }
            }
            for (t, pl) in labels.iter().enumerate() {
                if let Some(row) = k.emit.get(s).and_then(|r| r.get(t)) {
                    let dist = p.observations.iter().cloned().zip(row.iter().copied()).collect();
                    emissions.insert(key(sl, pl), dist);
                }
            }
        }
        Self {
            schema: PROBLEM_SCHEMA.to_string(),
            parameters: ParametersDoc {
                labels: labels.clone(),
                prior,
            },
            actions: p.actions.clone(),
            observations: p.observations.clone(),
            reward,
            automaton: AutomatonDoc {
                states: k.states.clone(),
                start: k.states.get(k.start).cloned().unwrap_or_default(),
                transitions,
                emissions,
            },
            discount: p.discount,
        }
    }
}

fn lookup(labels: &[String], label: &str, kind: &str) -> Result<usize> {
    labels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| Error::Schema(format!("unknown {kind} label {label:?}")))
}

fn split_key<'k>(k: &'k str, what: &str) -> Result<(&'k str, &'k str)> {
    k.split_once('/')
        .ok_or_else(|| Error::Schema(format!("{what} key {k:?} is not of the form \"x/y\"")))
}

impl TryFrom<ProblemDocument> for DecisionProblem {
    type Error = Error;

    fn try_from(doc: ProblemDocument) -> Result<Self> {
        if doc.schema != PROBLEM_SCHEMA {
            return Err(Error::Schema(format!(
                "schema {:?}, expected {PROBLEM_SCHEMA:?}",
                doc.schema
            )));
        }
        let labels = doc.parameters.labels;
        let (np, na, no) = (labels.len(), doc.actions.len(), doc.observations.len());
        let states = doc.automaton.states;
        let ns = states.len();

        let mut prior = vec![f64::NAN; np];
        for (l, w) in &doc.parameters.prior {
            prior[lookup(&labels, l, "parameter")?] = *w;
        }
        if let Some(i) = prior.iter().position(|w| w.is_nan()) {
            return Err(Error::Schema(format!("missing prior weight for {:?}", labels[i])));
        }

        let mut reward = vec![vec![f64::NAN; na]; np];
        for (k, r) in &doc.reward {
            let (pl, al) = split_key(k, "reward")?;
            reward[lookup(&labels, pl, "parameter")?][lookup(&doc.actions, al, "action")?] = *r;
        }
        for (i, row) in reward.iter().enumerate() {
            if let Some(j) = row.iter().position(|r| r.is_nan()) {
                return Err(Error::Schema(format!(
                    "missing reward entry {:?}",
                    key(&labels[i], &doc.actions[j])
                )));
            }
        }

        let mut transition = vec![vec![usize::MAX; na]; ns];
        for (k, target) in &doc.automaton.transitions {
            let (sl, al) = split_key(k, "transition")?;
            transition[lookup(&states, sl, "state")?][lookup(&doc.actions, al, "action")?] =
                lookup(&states, target, "state")?;
        }
        for (s, row) in transition.iter().enumerate() {
            if let Some(a) = row.iter().position(|t| *t == usize::MAX) {
                return Err(Error::Schema(format!(
                    "missing transition {:?}",
                    key(&states[s], &doc.actions[a])
                )));
            }
        }

        let mut emit = vec![vec![Vec::new(); np]; ns];
        for (k, dist) in &doc.automaton.emissions {
            let (sl, pl) = split_key(k, "emission")?;
            let mut row = vec![0.0; no];
            for (ol, q) in dist {
                row[lookup(&doc.observations, ol, "observation")?] = *q;
            }
            emit[lookup(&states, sl, "state")?][lookup(&labels, pl, "parameter")?] = row;
        }
        for (s, per_param) in emit.iter().enumerate() {
            if let Some(t) = per_param.iter().position(Vec::is_empty) {
                return Err(Error::Schema(format!(
                    "missing emission {:?}",
                    key(&states[s], &labels[t])
                )));
            }
        }
        let start = lookup(&states, &doc.automaton.start, "state")?;

        Ok(DecisionProblem {
            params: ParameterSpace { labels, prior },
            actions: doc.actions,
            observations: doc.observations,
            reward,
            kernel: ObservationAutomaton {
                states,
                start,
                transition,
                emit,
            },
            discount: doc.discount,
        })
    }
}
