//! The revelation family: `m` equally likely parameters, one matching action
//! per parameter plus a probing action `a0` that earns nothing. While only
//! `a0` has been played, each stage reveals the parameter with probability
//! `c = (1 - delta) / (delta (m - 1))`; any other action silences the kernel.
//!
//! The rule "probe until revealed, then play the matching action" is optimal
//! and its expected total experimentation is `(m - 1) / m * delta / (1 - delta)`,
//! a `(m - 1) / m` fraction of the general bound.

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::model::{DecisionProblem, ObservationAutomaton, ParameterSpace};
use crate::sim::{DecisionRule, StageView};

pub const PROBE: &str = "a0";
pub const NOTHING: &str = "nothing";

/// Automaton states: before the first action, after an unbroken run of `a0`,
/// and after any deviation.
pub const STATES: [&str; 3] = ["start", "probing", "deviated"];

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Family {
    pub m: usize,
    pub delta: f64,
    /// Per-stage revelation probability while probing.
    pub c: f64,
    pub problem: DecisionProblem,
    pub rule: RevelationRule,
}

/// Probe until the posterior is a point mass, then play the action matching
/// that parameter forever.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevelationRule {
    pub probe: usize,
    /// For each parameter, the action that earns 1 under it.
    pub commit: Vec<usize>,
}

impl RevelationRule {
    /// Derives the rule from the labels written by [`build_prop1`].
    pub fn for_problem(p: &DecisionProblem) -> Result<Self> {
        let find = |l: &str| {
            p.action_index(l)
                .ok_or_else(|| Error::InvalidConfig(format!("problem has no `{l}` action")))
        };
        let probe = find(PROBE)?;
        let commit = (1..=p.num_params())
            .map(|k| find(&format!("a{k}")))
            .collect::<Result<_>>()?;
        Ok(Self { probe, commit })
    }

    fn committed(&self, view: &StageView<'_>) -> Option<usize> {
        view.belief.iter().position(|w| *w == 1.0).map(|k| self.commit[k])
    }
}

impl DecisionRule for RevelationRule {
    fn name(&self) -> &str {
        "probe-until-revealed"
    }

    fn choose(&self, _: &DecisionProblem, view: &StageView<'_>) -> usize {
        self.committed(view).unwrap_or(self.probe)
    }

    fn declares_absorption(&self, _: &DecisionProblem, view: &StageView<'_>, _: usize) -> bool {
        self.committed(view).is_some()
    }
}

pub fn revelation_probability(m: usize, delta: f64) -> f64 {
    (1.0 - delta) / (delta * (m as f64 - 1.0))
}

pub fn build_prop1(m: usize, delta: f64) -> Result<Prop1Family> {
    if m < 2 {
        return Err(precondition("m", "m >= 2", m));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(precondition("delta", "0 < delta < 1", delta));
    }
    if !(m as f64 * delta > 1.0) {
        return Err(precondition(
            "m",
            format!("m > 1/delta = {} so that the revelation probability c < 1", 1.0 / delta),
            m,
        ));
    }
    let c = revelation_probability(m, delta);

    let params: Vec<String> = (1..=m).map(|k| format!("theta{k}")).collect();
    let actions: Vec<String> = (0..=m).map(|k| format!("a{k}")).collect();
    let mut observations = vec![NOTHING.to_string()];
    observations.extend(params.iter().map(|p| format!("reveal-{p}")));

    let reward = (0..m)
        .map(|k| (0..=m).map(|a| if a == k + 1 { 1.0 } else { 0.0 }).collect())
        .collect();

    let silent_row = |_: usize| {
        let mut row = vec![0.0; m + 1];
        row[0] = 1.0;
        row
    };
    let revealing_row = |k: usize| {
        let mut row = vec![0.0; m + 1];
        row[0] = 1.0 - c;
        row[k + 1] = c;
        row
    };
    let (start, probing, deviated) = (0, 1, 2);
    let step = |on_probe: usize| -> Vec<usize> { (0..=m).map(|a| if a == 0 { on_probe } else { deviated }).collect() };
    let kernel = ObservationAutomaton {
        states: STATES.iter().map(|s| s.to_string()).collect(),
        start,
        transition: vec![step(probing), step(probing), vec![deviated; m + 1]],
        emit: vec![
            (0..m).map(silent_row).collect(),
            (0..m).map(revealing_row).collect(),
            (0..m).map(silent_row).collect(),
        ],
    };

    let problem = DecisionProblem {
        params: ParameterSpace::uniform(params),
        actions,
        observations,
        reward,
        kernel,
        discount: delta,
    };
    problem.ensure_valid()?;
    let rule = RevelationRule::for_problem(&problem)?;
    Ok(Prop1Family {
        m,
        delta,
        c,
        problem,
        rule,
    })
}

/// Normalized value `A` of the probing rule, solving `A = c delta + (1 - c) delta A`.
/// Fails if it differs from `1/m` by more than `1e-12`.
pub fn prop1_value(fam: &Prop1Family) -> Result<f64> {
    let (c, d) = (fam.c, fam.delta);
    let value = c * d / (1.0 - (1.0 - c) * d);
    let target = 1.0 / fam.m as f64;
    if (value - target).abs() > 1e-12 {
        return Err(Error::Check(format!(
            "probing value {value} differs from 1/m = {target}"
        )));
    }
    Ok(value)
}

/// Exact expected total experimentation of the probing rule.
pub fn prop1_exact_total(fam: &Prop1Family) -> f64 {
    let m = fam.m as f64;
    (m - 1.0) / m * fam.delta / (1.0 - fam.delta)
}
