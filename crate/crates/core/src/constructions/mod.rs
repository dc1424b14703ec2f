//! The two tightness constructions: the revelation family, solved exactly and
//! simulated, and the Gaussian precision sequence, checked analytically.

pub mod gaussian;
pub mod prop1;

pub use gaussian::{
    default_epsilon_sequence, epsilon_sequence, gaussian_ubar, n_epsilon_alpha_curve, prop2_deviation_check,
    solve_rho_sequence, DeviationCheck, EpsilonSequence, GaussianConstruction, SequenceChecks,
};
pub use prop1::{build_prop1, prop1_exact_total, prop1_value, Prop1Family, RevelationRule};
