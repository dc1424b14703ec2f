//! Bayesian updating, myopic values and the per-stage experimentation gap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{expected_extreme_rewards, Belief, DecisionProblem};

/// Gaps whose magnitude is below this are reported as exactly zero.
pub const GAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAssessment {
    pub belief: Belief,
    pub myopic_value: f64,
    pub chosen_value: f64,
    pub gap: f64,
}

/// Mixture probability of `obs` in automaton state `kstate` under `weights`.
pub fn observation_probability(p: &DecisionProblem, weights: &[f64], kstate: usize, obs: usize) -> f64 {
    weights
        .iter()
        .enumerate()
        .map(|(t, w)| w * p.emission(kstate, t)[obs])
        .sum()
}

/// Writes the posterior into `out`, renormalizing to absorb rounding drift.
pub(crate) fn update_into(
    p: &DecisionProblem,
    weights: &[f64],
    kstate: usize,
    obs: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    out.clear();
    out.extend(weights.iter().enumerate().map(|(t, w)| w * p.emission(kstate, t)[obs]));
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ImpossibleObservation {
            state: p.kernel.states[kstate].clone(),
            observation: p.observations[obs].clone(),
        });
    }
    out.iter_mut().for_each(|w| *w /= total);
    Ok(())
}

pub fn bayes_update(p: &DecisionProblem, b: &Belief, kstate: usize, obs: usize) -> Result<Belief> {
    let mut out = Vec::with_capacity(p.num_params());
    update_into(p, b.weights(), kstate, obs, &mut out)?;
    Ok(Belief::from_raw(out))
}

#[inline]
pub(crate) fn expected_reward_of(p: &DecisionProblem, weights: &[f64], action: usize) -> f64 {
    weights.iter().zip(&p.reward).map(|(w, row)| w * row[action]).sum()
}

pub fn expected_reward(p: &DecisionProblem, b: &Belief, action: usize) -> f64 {
    expected_reward_of(p, b.weights(), action)
}

/// First maximizer in action-list order, with its value.
pub(crate) fn myopic_best_of(p: &DecisionProblem, weights: &[f64]) -> (usize, f64) {
    let mut best = (0, expected_reward_of(p, weights, 0));
    for a in 1..p.num_actions() {
        let v = expected_reward_of(p, weights, a);
        if v > best.1 {
            best = (a, v);
        }
    }
    best
}

/// Myopically optimal action and value. Ties go to the earliest action.
pub fn myopic_best(p: &DecisionProblem, b: &Belief) -> (usize, f64) {
    myopic_best_of(p, b.weights())
}

#[inline]
pub(crate) fn clamp_gap(gap: f64) -> f64 {
    if gap.abs() <= GAP_TOL {
        0.0
    } else {
        gap
    }
}

/// `(myopic value, chosen value, gap)` without cloning the belief.
pub(crate) fn gap_parts(p: &DecisionProblem, weights: &[f64], action: usize) -> (f64, f64, f64) {
    let (best, myopic) = myopic_best_of(p, weights);
    let chosen = if best == action {
        myopic
    } else {
        expected_reward_of(p, weights, action)
    };
    (myopic, chosen, clamp_gap(myopic - chosen))
}

pub fn experimentation_gap(p: &DecisionProblem, b: &Belief, action: usize) -> f64 {
    gap_parts(p, b.weights(), action).2
}

pub fn assess(p: &DecisionProblem, b: &Belief, action: usize) -> StageAssessment {
    let (myopic_value, chosen_value, gap) = gap_parts(p, b.weights(), action);
    StageAssessment {
        belief: b.clone(),
        myopic_value,
        chosen_value,
        gap,
    }
}

/// `(E[max u] - E[min u]) * delta / (1 - delta)`.
pub fn theorem_bound(p: &DecisionProblem) -> f64 {
    let (hi, lo) = expected_extreme_rewards(p);
    (hi - lo) * p.discount / (1.0 - p.discount)
}
