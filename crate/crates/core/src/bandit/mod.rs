//! One-arm bandit with a safe arm paying 0 and a risky arm of unknown type.
//!
//! Under either type the risky arm yields one of three outcomes `a, b, c`;
//! their log-likelihood ratios (type 1 over type 0) are `alpha`, `2 alpha` and
//! `-alpha`, so the posterior log-odds `Z_n` walks on the lattice `alpha Z`.
//! Expected risky rewards are `+1` (type 1) and `-1` (type 0).
//!
//! The optimal rule pulls the risky arm until `Z_n` first reaches `-k* alpha`.
//! [`cutoff`] finds `k*` by value iteration, [`visits`] computes the expected
//! number of passages at each level under type 0, and [`checks`] ties both to
//! the bound on total experimentation.

pub mod checks;
pub mod cutoff;
pub mod visits;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::model::{DecisionProblem, ObservationAutomaton, ParameterSpace};
use crate::sim::{DecisionRule, StageView};

pub use checks::{
    path_identity_check, path_identity_check_given, theorem_consistency, ConsistencyReport, PathIdentity,
};
pub use cutoff::{cutoff_bound, default_k_max, solve_cutoff, solve_cutoff_with, CutoffResult};
pub use visits::{expected_visits, linear_visits, LevelVisits, VisitReport};

const LLR_TOL: f64 = 1e-10;
const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    A,
    B,
    C,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::A, Outcome::B, Outcome::C];

    /// Lattice step in units of `alpha`.
    pub fn step(self) -> i64 {
        match self {
            Outcome::A => 1,
            Outcome::B => 2,
            Outcome::C => -1,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(Outcome::A),
            "b" => Ok(Outcome::B),
            "c" => Ok(Outcome::C),
            other => Err(Error::InvalidConfig(format!("unknown outcome {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditSpec {
    pub alpha: f64,
    /// Outcome probabilities `(a, b, c)` under type 0.
    pub p0: [f64; 3],
    /// Outcome probabilities `(a, b, c)` under type 1.
    pub p1: [f64; 3],
    /// Outcome rewards `(r_a, r_b, r_c)`.
    pub rewards: [f64; 3],
    pub delta: f64,
}

/// Solves the outcome law and rewards from the free parameters `p0_a` and `r_b`.
pub fn build_bandit(alpha: f64, p0a: f64, rb: f64, delta: f64) -> Result<BanditSpec> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(precondition("alpha", "alpha > 0", alpha));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(precondition("delta", "0 <= delta < 1", delta));
    }
    if !rb.is_finite() {
        return Err(precondition("r_b", "finite", rb));
    }
    if !(p0a > 0.0 && p0a < 1.0) {
        return Err(Error::InfeasibleBandit {
            component: "p0_a",
            value: p0a,
        });
    }
    let (e1, e2, em1) = (alpha.exp(), (2.0 * alpha).exp(), (-alpha).exp());
    // p0a + p0b + p0c = 1 and e1 p0a + e2 p0b + em1 p0c = 1.
    let p0b = (1.0 - em1 - p0a * (e1 - em1)) / (e2 - em1);
    let p0c = 1.0 - p0a - p0b;
    for (component, value) in [("p0_b", p0b), ("p0_c", p0c)] {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::InfeasibleBandit { component, value });
        }
    }
    let p0 = [p0a, p0b, p0c];
    let p1 = [e1 * p0a, e2 * p0b, em1 * p0c];
    for (component, value) in [("p1_a", p1[0]), ("p1_b", p1[1]), ("p1_c", p1[2])] {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::InfeasibleBandit { component, value });
        }
    }
    // r_a p1a + r_c p1c = 1 - r_b p1b and r_a p0a + r_c p0c = -1 - r_b p0b.
    let (y1, y0) = (1.0 - rb * p1[1], -1.0 - rb * p0[1]);
    let det = p1[0] * p0[2] - p1[2] * p0[0];
    let ra = (y1 * p0[2] - p1[2] * y0) / det;
    let rc = (p1[0] * y0 - y1 * p0[0]) / det;
    let spec = BanditSpec {
        alpha,
        p0,
        p1,
        rewards: [ra, rb, rc],
        delta,
    };
    spec.validate()?;
    Ok(spec)
}

impl BanditSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Check(m));
        if !(self.alpha > 0.0) {
            return fail(format!("alpha = {} must be positive", self.alpha));
        }
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return fail(format!("delta = {} outside [0, 1)", self.delta));
        }
        for (name, p) in [("p0", &self.p0), ("p1", &self.p1)] {
            if p.iter().any(|x| !(*x > 0.0 && *x < 1.0)) {
                return fail(format!("{name} = {p:?} has entries outside (0, 1)"));
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > SUM_TOL {
                return fail(format!("{name} sums to {s}"));
            }
        }
        for o in Outcome::ALL {
            let i = o.index();
            let llr = (self.p1[i] / self.p0[i]).ln();
            if (llr - o.step() as f64 * self.alpha).abs() > LLR_TOL {
                return fail(format!("log-likelihood ratio of {o:?} is {llr}"));
            }
        }
        let (m1, m0) = self.expected_rewards();
        if (m1 - 1.0).abs() > LLR_TOL || (m0 + 1.0).abs() > LLR_TOL {
            return fail(format!("expected risky rewards are ({m1}, {m0}), not (1, -1)"));
        }
        Ok(())
    }

    /// `(E[r | type 1], E[r | type 0])`.
    pub fn expected_rewards(&self) -> (f64, f64) {
        let dot = |p: &[f64; 3]| p.iter().zip(&self.rewards).map(|(q, r)| q * r).sum::<f64>();
        (dot(&self.p1), dot(&self.p0))
    }

    pub fn p0a(&self) -> f64 {
        self.p0[0]
    }

    /// Finite decision problem with the outcome re-labelled as an observation
    /// and the risky reward replaced by its conditional mean.
    pub fn to_problem(&self) -> DecisionProblem {
        let row = |p: &[f64; 3]| vec![0.0, p[0], p[1], p[2]];
        DecisionProblem {
            params: ParameterSpace::uniform(vec![TYPE0.into(), TYPE1.into()]),
            actions: vec![SAFE.into(), RISKY.into()],
            observations: OBSERVATIONS.iter().map(|s| s.to_string()).collect(),
            reward: vec![vec![0.0, -1.0], vec![0.0, 1.0]],
            kernel: ObservationAutomaton {
                states: vec!["idle".into(), "pulled".into()],
                start: 0,
                transition: vec![vec![0, 1], vec![0, 1]],
                emit: vec![
                    vec![vec![1.0, 0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]],
                    vec![row(&self.p0), row(&self.p1)],
                ],
            },
            discount: self.delta,
        }
    }
}

pub const TYPE0: &str = "theta0";
pub const TYPE1: &str = "theta1";
pub const SAFE: &str = "safe";
pub const RISKY: &str = "risky";
pub const OBSERVATIONS: [&str; 4] = ["none", "a", "b", "c"];

pub fn llr_of_outcome(spec: &BanditSpec, outcome: &str) -> Result<f64> {
    let o: Outcome = outcome.parse()?;
    Ok(o.step() as f64 * spec.alpha)
}

/// `e^z / (1 + e^z)` without overflow.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Posterior probability of type 1 at log-odds `-k alpha`.
pub fn belief_at_level(k: i64, alpha: f64) -> f64 {
    logistic(-(k as f64) * alpha)
}

/// Per-stage experimentation at level `-k alpha` in the half-gap convention,
/// `1/2 - pi`.
pub fn epsilon_at_level(k: i64, alpha: f64) -> f64 {
    0.5 - belief_at_level(k, alpha)
}

/// Pull the risky arm until the log-odds reach `-kstar alpha`, then play safe.
///
/// The level is read off the belief: `round(ln(pi / (1 - pi)) / alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffRule {
    pub kstar: i64,
    pub alpha: f64,
    safe: usize,
    risky: usize,
}

impl CutoffRule {
    pub fn new(kstar: i64, alpha: f64) -> Self {
        Self {
            kstar,
            alpha,
            safe: 0,
            risky: 1,
        }
    }

    /// Resolves the action labels of a bandit problem.
    pub fn for_problem(p: &DecisionProblem, kstar: i64, alpha: f64) -> Result<Self> {
        let find = |l: &str| {
            p.action_index(l)
                .ok_or_else(|| Error::InvalidConfig(format!("problem has no `{l}` action")))
        };
        if p.num_params() != 2 || p.param_index(TYPE1) != Some(1) {
            return Err(Error::InvalidConfig(format!(
                "cut-off rule needs parameters [{TYPE0}, {TYPE1}]"
            )));
        }
        Ok(Self {
            kstar,
            alpha,
            safe: find(SAFE)?,
            risky: find(RISKY)?,
        })
    }

    pub fn level(&self, belief: &[f64]) -> i64 {
        let (w0, w1) = (belief[0], belief[1]);
        if w0 <= 0.0 {
            return i64::MAX;
        }
        if w1 <= 0.0 {
            return i64::MIN;
        }
        ((w1.ln() - w0.ln()) / self.alpha).round() as i64
    }
}

impl DecisionRule for CutoffRule {
    fn name(&self) -> &str {
        "cut-off"
    }

    fn choose(&self, _: &DecisionProblem, view: &StageView<'_>) -> usize {
        if self.level(view.belief) <= -self.kstar {
            self.safe
        } else {
            self.risky
        }
    }

    fn declares_absorption(&self, _: &DecisionProblem, _: &StageView<'_>, action: usize) -> bool {
        action == self.safe
    }
}
