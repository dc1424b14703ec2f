use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Structural problem in a serialized problem document.
    #[error("problem document: {0}")]
    Schema(String),

    #[error("invalid decision problem: {0}")]
    InvalidProblem(String),

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    /// The observed symbol has zero mixture probability in this automaton state.
    #[error("impossible observation `{observation}` in automaton state `{state}`")]
    ImpossibleObservation { state: String, observation: String },

    #[error("rule `{rule}` declared absorption at stage {stage}, but {reason}")]
    AbsorptionRejected { rule: String, stage: usize, reason: String },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    /// A numeric argument violates the owning operation's precondition.
    #[error("{what}: {constraint} (got {got})")]
    Precondition {
        what: &'static str,
        constraint: String,
        got: String,
    },

    #[error("infeasible bandit parameterization: {component} = {value} is outside (0, 1)")]
    InfeasibleBandit { component: &'static str, value: f64 },

    #[error("lattice truncation too tight: cut-off at level {kstar} with K_max = {k_max}; raise K_max")]
    TruncationTooTight { kstar: i64, k_max: i64 },

    #[error("cut-off changed from {kstar} to {kstar_doubled} when K_max was doubled")]
    TruncationSensitive { kstar: i64, kstar_doubled: i64 },

    #[error("stop region is not a down-set: V(-{level}*alpha) = {value} > 0 below the cut-off {kstar}")]
    NotThreshold { kstar: i64, level: i64, value: f64 },

    #[error("{0} did not converge")]
    NoConvergence(String),

    #[error("internal check failed: {0}")]
    Check(String),
}

pub(crate) fn precondition(what: &'static str, constraint: impl Into<String>, got: impl ToString) -> Error {
    Error::Precondition {
        what,
        constraint: constraint.into(),
        got: got.to_string(),
    }
}
